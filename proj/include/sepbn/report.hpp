#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sepbn/eval.hpp"
#include "sepbn/train.hpp"

namespace sepbn {

// Round-trip decimal formatting ("%.17g"); NaN prints as "nan".
std::string format_double(double v);

// step,epoch,lr,loss_main,loss_aux,loss_total; loss_aux is empty when the
// auxiliary branch did not run.
std::string training_log_csv(const std::vector<StepLog>& log);

// Header "fy\fx" followed by the horizontal frequencies, then one row per
// vertical frequency, both in centered order.
std::string fourier_csv(const FourierMap& map);
// Binary PGM (P5), one byte per cell: round(255 * error).
std::vector<std::uint8_t> fourier_pgm(const FourierMap& map);

// predictor,corruption,severity,parameter,error
std::string corruption_errors_csv(const std::vector<CorruptionReport>& reports);
// predictor,corruption,uce,ce
std::string corruption_summary_csv(const std::vector<CorruptionReport>& reports);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace sepbn
