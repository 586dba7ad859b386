#include "sepbn/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "sepbn/checkpoint.hpp"
#include "sepbn/errors.hpp"
#include "sepbn/report.hpp"
#include "sepbn/train.hpp"

namespace sepbn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path data_root(const DataConfig& data) {
  if (!data.root.empty()) return data.root;
  if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') return env;
  throw DataError("data.source '" + data.source + "' needs a dataset directory: set data.root or $" +
                  kDataRootEnv);
}

// Accepts either the directory holding the batch files or its parent.
fs::path locate(const fs::path& root, const char* subdir) {
  if (fs::is_directory(root / subdir)) return root / subdir;
  return root;
}

void prepare_out(const ExperimentConfig& config, const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  write_text(out / "resolved_config.json", resolved_json(config));
}

Model load_model(const fs::path& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("this command needs --checkpoint <path>");
  return load_checkpoint(checkpoint).model;
}

Dataset test_split(const ExperimentConfig& config, const Model& model) {
  Dataset test = load_data(config.data).second;
  const auto& mc = model.net.config();
  if (test.classes != mc.classes || test.channels != mc.in_channels) {
    throw ConfigError("checkpoint model (" + std::to_string(mc.classes) +
                      " classes) does not match the configured dataset (" +
                      std::to_string(test.classes) + " classes)");
  }
  if (test.size() == 0) throw DataError("test split is empty");
  return test;
}

std::vector<Predictor> available(const Model& model, std::vector<Predictor> wanted) {
  if (branch_initialized(model.net, BranchId::Auxiliary)) return wanted;
  std::vector<Predictor> out;
  for (const auto& p : wanted) {
    if (!p.uses_aux()) out.push_back(p);
  }
  if (out.size() != wanted.size()) {
    std::cerr << "note: auxiliary branch statistics were never updated; skipping predictors that use it\n";
  }
  return out;
}

json nan_safe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::pair<Dataset, Dataset> load_data(const DataConfig& data) {
  std::pair<Dataset, Dataset> splits;
  if (data.source == "synthetic") {
    splits = synth_dataset(data.synthetic);
  } else if (data.source == "cifar10") {
    splits = load_cifar10(locate(data_root(data), "cifar-10-batches-bin"));
  } else if (data.source == "cifar100") {
    splits = load_cifar100(locate(data_root(data), "cifar-100-binary"));
  } else {
    throw ConfigError("data.source: unknown source '" + data.source + "'");
  }
  auto& [train, test] = splits;
  if (data.train_subset > 0 && data.train_subset < train.size()) {
    train = train.head(data.train_subset);
    train.norm = Standardization::from_images(train.images, train.channels, train.height * train.width);
    test.norm = train.norm;
  }
  if (data.test_subset > 0) test = test.head(data.test_subset);
  return splits;
}

bool branch_initialized(const Network& net, BranchId branch) {
  for (const auto& n : const_cast<Network&>(net).norm_layers()) {
    if (n.norm->stats(branch).updates == 0) return false;
  }
  return true;
}

void cmd_train(const ExperimentConfig& config, const fs::path& out) {
  prepare_out(config, out);
  const auto [train_set, test_set] = load_data(config.data);
  const CheckpointMeta meta{config_digest(config), config.train.seed};

  double epoch_loss = 0.0;
  std::size_t epoch_steps = 0;
  auto on_step = [&](const StepLog& s) {
    epoch_loss += s.loss_total;
    ++epoch_steps;
  };
  auto on_epoch = [&](int done, const Network& net) {
    std::cerr << "epoch " << done << "/" << config.train.epochs << "  mean loss "
              << (epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0) << "\n";
    epoch_loss = 0.0;
    epoch_steps = 0;
    if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.train.epochs) {
      save_checkpoint(out / ("checkpoint_epoch_" + std::to_string(done) + ".ckpt"), {net, train_set.norm},
                      meta);
    }
  };
  const TrainResult result = train(config.train, train_set, on_epoch, on_step);
  const Model model{result.net, train_set.norm};
  save_checkpoint(out / "model.ckpt", model, meta);
  write_text(out / "train_log.csv", training_log_csv(result.log));

  json summary = {{"preset", config.preset},
                  {"steps", result.log.size()},
                  {"parameters", model.net.parameter_count()}};
  if (!result.log.empty()) {
    summary["initial_loss"] = result.log.front().loss_total;
    summary["final_loss"] = result.log.back().loss_total;
    // The last batch of an epoch can be short and noisy; the epoch mean is the
    // steadier figure.
    double sum = 0.0;
    std::size_t n = 0;
    for (const StepLog& s : result.log) {
      if (s.epoch == result.log.back().epoch) {
        sum += s.loss_total;
        ++n;
      }
    }
    summary["final_epoch_mean_loss"] = sum / static_cast<double>(n);
  }
  if (test_set.size() > 0 && branch_initialized(model.net, BranchId::Main)) {
    summary["test_accuracy_main"] = evaluate(model, test_set, BranchId::Main);
    if (branch_initialized(model.net, BranchId::Auxiliary)) {
      summary["test_accuracy_aux"] = evaluate(model, test_set, BranchId::Auxiliary);
    }
  }
  write_text(out / "train_summary.json", summary.dump(2) + "\n");
}

void cmd_eval(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& out) {
  const auto& ec = config.eval;
  if (ec.compute_ce && ec.ce_baseline.empty()) {
    throw ConfigError("eval.compute_ce requires eval.ce_baseline");
  }
  prepare_out(config, out);
  const Model model = load_model(checkpoint);
  const Dataset test = test_split(config, model);
  const bool aux_ready = branch_initialized(model.net, BranchId::Auxiliary);

  std::string clean = "predictor,top1,top5\n";
  json report;
  for (BranchId b : {BranchId::Main, BranchId::Auxiliary}) {
    if (b == BranchId::Auxiliary && !aux_ready) continue;
    const double top1 = evaluate(model, test, b);
    const double top5 = evaluate_topk(model, test, b, std::min(5, test.classes));
    clean += std::string(branch_name(b)) + "," + format_double(top1) + "," + format_double(top5) + "\n";
    report["clean"][branch_name(b)] = {{"top1", top1}, {"top5", top5}};
  }
  write_text(out / "clean_accuracy.csv", clean);

  std::vector<Predictor> predictors{Predictor::main(), Predictor::auxiliary()};
  for (double l : ec.lambdas) predictors.push_back(Predictor::blend(l));
  predictors = available(model, predictors);

  const Dataset subset = test.head(ec.corruption_samples);
  auto reports = corruption_suite(model, subset, ec.corruptions, predictors, config.train.seed);
  if (ec.compute_ce) {
    const Model base = load_model(ec.ce_baseline);
    const auto baseline =
        corruption_suite(base, subset, ec.corruptions, Predictor::main(), config.train.seed);
    for (auto& r : reports) attach_baseline(r, baseline);
    write_text(out / "baseline_corruption_errors.csv", corruption_errors_csv({baseline}));
  }
  write_text(out / "corruption_errors.csv", corruption_errors_csv(reports));
  write_text(out / "corruption_summary.csv", corruption_summary_csv(reports));

  std::string curve = "lambda,accuracy,mean_uce\n";
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    if (predictors[p].kind != Predictor::Kind::Blend) continue;
    const double acc = evaluate(model, test, predictors[p]);
    curve += format_double(predictors[p].lambda) + "," + format_double(acc) + "," +
             format_double(reports[p].mean_uce) + "\n";
    report["lambda_curve"].push_back(
        {{"lambda", predictors[p].lambda}, {"accuracy", acc}, {"mean_uce", reports[p].mean_uce}});
  }
  write_text(out / "lambda_curve.csv", curve);

  for (const auto& r : reports) {
    json entry = {{"predictor", r.predictor}, {"mean_uce", r.mean_uce}, {"provenance", r.provenance}};
    for (std::size_t c = 0; c < r.corruptions.size(); ++c) {
      entry["uce"][corruption_name(r.corruptions[c])] = r.uce[c];
      if (!r.ce.empty()) entry["ce"][corruption_name(r.corruptions[c])] = nan_safe(r.ce[c]);
    }
    if (!r.ce.empty()) entry["mean_ce"] = nan_safe(r.mean_ce);
    report["corruption"].push_back(entry);
  }
  write_text(out / "eval_report.json", report.dump(2) + "\n");
}

void cmd_fourier(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& out) {
  prepare_out(config, out);
  const Model model = load_model(checkpoint);
  const Dataset subset = test_split(config, model).head(config.eval.fourier_samples);
  std::vector<Predictor> wanted;
  for (const auto& name : config.eval.fourier_predictors) {
    wanted.push_back(name == "aux" ? Predictor::auxiliary() : Predictor::main());
  }
  const auto predictors = available(model, wanted);
  const auto maps =
      fourier_sensitivity(model, subset, config.eval.fourier_norm, predictors, config.train.seed);
  for (const auto& m : maps) {
    write_text(out / ("fourier_" + m.predictor + ".csv"), fourier_csv(m));
    write_file(out / ("fourier_" + m.predictor + ".pgm"), fourier_pgm(m));
  }
}

void cmd_lowpass(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& out) {
  prepare_out(config, out);
  const Model model = load_model(checkpoint);
  const Dataset test = test_split(config, model);
  std::string csv = "bandwidth,predictor,accuracy\n";
  for (const auto& p : available(model, {Predictor::main(), Predictor::auxiliary()})) {
    const auto acc =
        low_pass_sweep(model, test, config.eval.lowpass_bandwidths, p, config.eval.lowpass_samples);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      csv += std::to_string(config.eval.lowpass_bandwidths[i]) + "," + p.name() + "," +
             format_double(acc[i]) + "\n";
    }
  }
  write_text(out / "lowpass.csv", csv);
}

void cmd_affinity(const ExperimentConfig& config, const fs::path& checkpoint, const fs::path& out) {
  prepare_out(config, out);
  const Model model = load_model(checkpoint);
  const Dataset test = test_split(config, model);
  const double clean = evaluate(model, test, BranchId::Main);
  std::string csv = "policy,clean_accuracy,affinity\n";
  for (const auto& policy : config.eval.affinity_policies) {
    csv += policy.name + "," + format_double(clean) + "," +
           format_double(affinity(model, test, policy, config.train.seed)) + "\n";
  }
  write_text(out / "affinity.csv", csv);
}

void cmd_corrupt(const ExperimentConfig& config, const fs::path& out) {
  prepare_out(config, out);
  const Dataset test = load_data(config.data).second.head(config.eval.corruption_samples);
  if (test.channels != 3 || test.height != 32 || test.width != 32) {
    throw ConfigError("corrupt exports the CIFAR layout and needs 3x32x32 images");
  }
  std::string manifest = "corruption,severity,parameter,file,mean_abs_change\n";
  for (Corruption c : config.eval.corruptions) {
    for (int s = 1; s <= kSeverities; ++s) {
      Dataset copy = test;
      double change = 0.0;
      for (std::size_t i = 0; i < copy.size(); ++i) {
        auto rng = corruption_stream(config.train.seed, c, s, i);
        const Image img = corrupt(test.image_copy(i), c, s, rng);
        float* dst = copy.images.data() + i * copy.image_size();
        for (std::size_t k = 0; k < img.pixels.size(); ++k) {
          change += std::abs(static_cast<double>(img.pixels[k]) - dst[k]);
          dst[k] = img.pixels[k];
        }
      }
      const std::string file = corruption_name(c) + "_s" + std::to_string(s) + ".bin";
      write_file(out / file, encode_cifar_batch(copy, CifarLayout::Cifar10));
      const double denom = static_cast<double>(std::max<std::size_t>(1, copy.images.size()));
      manifest += corruption_name(c) + "," + std::to_string(s) + "," +
                  format_double(corruption_parameter(c, s)) + "," + file + "," +
                  format_double(change / denom) + "\n";
    }
  }
  write_text(out / "manifest.csv", manifest);
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Separated-BatchNorm training and robustness evaluation"};
  app.require_subcommand(1);
  std::string config_path, checkpoint, out = "out", preset;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--checkpoint", checkpoint, "Model checkpoint to evaluate");
  app.add_option("--out", out, "Output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Experiment seed (overrides the config)");
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--preset", preset, "Training preset (overrides the config)");

  const std::vector<std::pair<const char*, const char*>> commands{
      {"train", "Train a model and write a checkpoint and training log"},
      {"eval", "Clean accuracy, lambda curve and corruption error"},
      {"fourier", "Fourier sensitivity heatmaps"},
      {"lowpass", "Accuracy under low-pass filtering"},
      {"affinity", "Affinity of augmentation policies on a clean model"},
      {"corrupt", "Write corrupted copies of the test split"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    if (threads > 0) omp_set_num_threads(threads);
    ExperimentConfig config =
        config_path.empty() ? parse_config("{}", preset) : load_config(config_path, preset);
    if (seed_opt->count() > 0) config.train.seed = seed;

    if (command == "train") {
      cmd_train(config, out);
    } else if (command == "eval") {
      cmd_eval(config, checkpoint, out);
    } else if (command == "fourier") {
      cmd_fourier(config, checkpoint, out);
    } else if (command == "lowpass") {
      cmd_lowpass(config, checkpoint, out);
    } else if (command == "affinity") {
      cmd_affinity(config, checkpoint, out);
    } else {
      cmd_corrupt(config, out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"sepbn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace sepbn
