#include "sepbn/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sepbn/errors.hpp"

namespace sepbn {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string training_log_csv(const std::vector<StepLog>& log) {
  std::ostringstream os;
  os << "step,epoch,lr,loss_main,loss_aux,loss_total\n";
  for (const auto& s : log) {
    os << s.step << ',' << s.epoch << ',' << format_double(s.lr) << ',' << format_double(s.loss_main)
       << ',' << (s.loss_aux ? format_double(*s.loss_aux) : "") << ',' << format_double(s.loss_total)
       << '\n';
  }
  return os.str();
}

std::string fourier_csv(const FourierMap& map) {
  std::ostringstream os;
  os << "fy\\fx";
  for (int col = 0; col < map.width; ++col) os << ',' << col - map.width / 2;
  os << '\n';
  for (int row = 0; row < map.height; ++row) {
    os << row - map.height / 2;
    for (int col = 0; col < map.width; ++col) os << ',' << format_double(map.at_index(row, col));
    os << '\n';
  }
  return os.str();
}

std::vector<std::uint8_t> fourier_pgm(const FourierMap& map) {
  const std::string header =
      "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double e : map.errors) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(e, 0.0, 1.0) * 255.0)));
  }
  return out;
}

std::string corruption_errors_csv(const std::vector<CorruptionReport>& reports) {
  std::ostringstream os;
  os << "predictor,corruption,severity,parameter,error\n";
  for (const auto& r : reports) {
    for (std::size_t c = 0; c < r.corruptions.size(); ++c) {
      for (int s = 1; s <= kSeverities; ++s) {
        os << r.predictor << ',' << corruption_name(r.corruptions[c]) << ',' << s << ','
           << format_double(corruption_parameter(r.corruptions[c], s)) << ','
           << format_double(r.errors[c][s - 1]) << '\n';
      }
    }
  }
  return os.str();
}

std::string corruption_summary_csv(const std::vector<CorruptionReport>& reports) {
  std::ostringstream os;
  os << "predictor,corruption,uce,ce\n";
  for (const auto& r : reports) {
    for (std::size_t c = 0; c < r.corruptions.size(); ++c) {
      os << r.predictor << ',' << corruption_name(r.corruptions[c]) << ',' << format_double(r.uce[c])
         << ',' << (r.ce.empty() ? "" : format_double(r.ce[c])) << '\n';
    }
    os << r.predictor << ",mean," << format_double(r.mean_uce) << ','
       << (r.ce.empty() ? "" : format_double(r.mean_ce)) << '\n';
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace sepbn
