#include "sepbn/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sepbn/errors.hpp"

namespace sepbn {

using json = nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so the rest can be
// reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_or_root() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  Section child(const std::string& key) { return Section(raw(key), path(key)); }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type (" + std::string(node_.at(key).type_name()) + ")");
    }
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path(key) + "'");
    }
  }

 private:
  std::string path_or_root() const { return path_.empty() ? "<root>" : path_; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

AugmentStep::Kind parse_step_kind(const std::string& name, const std::string& where) {
  if (name == "flip") return AugmentStep::Kind::Flip;
  if (name == "pad_crop") return AugmentStep::Kind::PadCrop;
  if (name == "cutout") return AugmentStep::Kind::Cutout;
  if (name == "gaussian") return AugmentStep::Kind::Gaussian;
  if (name == "randaugment") return AugmentStep::Kind::RandAugment;
  throw ConfigError(where + ": unknown augment op '" + name + "'");
}

AugmentPolicy parse_policy(const json& node, const std::string& where) {
  if (node.is_string()) {
    try {
      return preset_policy(node.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  Section s(node, where);
  AugmentPolicy policy;
  s.read("name", policy.name);
  if (s.has("steps")) {
    const json& steps = s.raw("steps");
    if (!steps.is_array()) throw ConfigError(s.path("steps") + ": expected an array");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      Section st(steps[i], s.path("steps") + "[" + std::to_string(i) + "]");
      std::string op;
      st.read("op", op);
      AugmentStep step;
      step.kind = parse_step_kind(op, st.path("op"));
      switch (step.kind) {
        case AugmentStep::Kind::Flip: st.read("probability", step.probability); break;
        case AugmentStep::Kind::PadCrop: st.read("pad", step.pad); break;
        case AugmentStep::Kind::Cutout: st.read("size", step.size); break;
        case AugmentStep::Kind::Gaussian: st.read("sigma", step.sigma); break;
        case AugmentStep::Kind::RandAugment: {
          st.read("num_ops", step.num_ops);
          st.read("magnitude", step.magnitude);
          std::vector<std::string> pool;
          st.read("pool", pool);
          for (const auto& name : pool) {
            try {
              step.pool.push_back(parse_ra_op(name));
            } catch (const ConfigError& e) {
              throw ConfigError(st.path("pool") + ": " + e.what());
            }
          }
          break;
        }
      }
      st.finish();
      policy.steps.push_back(step);
    }
  }
  s.finish();
  try {
    validate_policy(policy);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return policy;
}

json policy_json(const AugmentPolicy& policy) {
  json steps = json::array();
  for (const auto& step : policy.steps) {
    json j;
    switch (step.kind) {
      case AugmentStep::Kind::Flip: j = {{"op", "flip"}, {"probability", step.probability}}; break;
      case AugmentStep::Kind::PadCrop: j = {{"op", "pad_crop"}, {"pad", step.pad}}; break;
      case AugmentStep::Kind::Cutout: j = {{"op", "cutout"}, {"size", step.size}}; break;
      case AugmentStep::Kind::Gaussian: j = {{"op", "gaussian"}, {"sigma", step.sigma}}; break;
      case AugmentStep::Kind::RandAugment: {
        json pool = json::array();
        for (RaOp op : step.pool) pool.push_back(ra_op_name(op));
        j = {{"op", "randaugment"}, {"num_ops", step.num_ops}, {"magnitude", step.magnitude},
             {"pool", pool}};
        break;
      }
    }
    steps.push_back(j);
  }
  return {{"name", policy.name}, {"steps", steps}};
}

int dataset_classes(const DataConfig& data) {
  if (data.source == "synthetic") return data.synthetic.classes;
  if (data.source == "cifar10") return 10;
  if (data.source == "cifar100") return 100;
  throw ConfigError("data.source: expected synthetic, cifar10 or cifar100, got '" + data.source + "'");
}

void validate(ExperimentConfig& config) {
  auto& d = config.data;
  if (d.synthetic.classes < 2) throw ConfigError("data.synthetic.classes must be >= 2");
  if (d.synthetic.size < 4) throw ConfigError("data.synthetic.size must be >= 4");
  if (!(d.synthetic.noise >= 0.0)) throw ConfigError("data.synthetic.noise must be >= 0");
  config.train.model.classes = dataset_classes(d);
  config.train.model.in_channels = 3;
  config.train.validate();
  if (config.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  const auto& e = config.eval;
  for (double l : e.lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("eval.lambdas: values must lie in [0, 1]");
  }
  if (!(e.fourier_norm > 0.0)) throw ConfigError("eval.fourier.norm must be > 0");
  const int full = d.source == "synthetic" ? d.synthetic.size : 32;
  for (int b : e.lowpass_bandwidths) {
    if (b < 1 || b > full) {
      throw ConfigError("eval.lowpass.bandwidths: " + std::to_string(b) + " outside [1, " +
                        std::to_string(full) + "]");
    }
  }
  for (const auto& p : e.fourier_predictors) {
    if (p != "main" && p != "aux") throw ConfigError("eval.fourier.predictors: expected main or aux");
  }
  if (e.compute_ce && e.ce_baseline.empty()) {
    throw ConfigError("eval.compute_ce requires eval.ce_baseline (a baseline checkpoint path)");
  }
}

}  // namespace

std::vector<std::string> train_preset_names() {
  return {"standard",          "randaugment", "two-ra",       "two-ra-dualbn", "weak-no-dual",
          "weak-shared-affine", "weak-augment", "clean"};
}

void apply_train_preset(ExperimentConfig& config, const std::string& name) {
  auto& t = config.train;
  t.alternate_policy.reset();
  t.aux_policy = AugmentPolicy::rand_augment();
  if (name == "standard") {
    t.main_policy = AugmentPolicy::flip_crop();
    t.dual = false;
    t.model.bn_mode = BnMode::Single;
  } else if (name == "randaugment") {
    t.main_policy = AugmentPolicy::rand_augment();
    t.dual = false;
    t.model.bn_mode = BnMode::Single;
  } else if (name == "two-ra" || name == "two-ra-dualbn") {
    t.main_policy = AugmentPolicy::rand_augment();
    t.dual = true;
    t.model.bn_mode = name == "two-ra" ? BnMode::Single : BnMode::FullySeparate;
  } else if (name == "weak-no-dual") {
    t.main_policy = AugmentPolicy::cutout_preset();
    t.alternate_policy = AugmentPolicy::rand_augment();
    t.dual = false;
    t.model.bn_mode = BnMode::Single;
  } else if (name == "weak-shared-affine" || name == "weak-augment") {
    t.main_policy = AugmentPolicy::cutout_preset();
    t.dual = true;
    t.model.bn_mode = name == "weak-augment" ? BnMode::FullySeparate : BnMode::SharedAffine;
  } else if (name == "clean") {
    t.main_policy = AugmentPolicy::none();
    t.dual = false;
    t.model.bn_mode = BnMode::Single;
  } else {
    std::string known;
    for (const auto& n : train_preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  config.preset = name;
}

ExperimentConfig default_config(const std::string& preset) {
  ExperimentConfig config;
  apply_train_preset(config, preset);
  validate(config);
  return config;
}

ExperimentConfig parse_config(const std::string& json_text, const std::string& preset_override) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section r(root, "");

  std::string preset = "standard";
  if (r.has("train")) {
    const json& t = root.at("train");
    if (t.is_object() && t.contains("preset")) {
      if (!t.at("preset").is_string()) throw ConfigError("train.preset: expected a string");
      preset = t.at("preset").get<std::string>();
    }
  }
  if (!preset_override.empty()) preset = preset_override;

  ExperimentConfig c;
  apply_train_preset(c, preset);
  r.read("seed", c.train.seed);

  if (r.has("data")) {
    Section d = r.child("data");
    d.read("source", c.data.source);
    d.read("root", c.data.root);
    d.read("train_subset", c.data.train_subset);
    d.read("test_subset", c.data.test_subset);
    if (d.has("synthetic")) {
      Section s = d.child("synthetic");
      s.read("classes", c.data.synthetic.classes);
      s.read("n_train", c.data.synthetic.n_train);
      s.read("n_test", c.data.synthetic.n_test);
      s.read("size", c.data.synthetic.size);
      s.read("seed", c.data.synthetic.seed);
      s.read("noise", c.data.synthetic.noise);
      s.finish();
    }
    d.finish();
  }

  if (r.has("model")) {
    Section m = r.child("model");
    m.read("depth", c.train.model.depth);
    m.read("width", c.train.model.width);
    if (m.has("bn_mode")) {
      std::string mode;
      m.read("bn_mode", mode);
      try {
        c.train.model.bn_mode = parse_bn_mode(mode);
      } catch (const Error& e) {
        throw ConfigError(m.path("bn_mode") + ": " + e.what());
      }
    }
    m.finish();
  }

  if (r.has("train")) {
    Section t = r.child("train");
    t.has("preset");
    t.read("epochs", c.train.epochs);
    t.read("batch_size", c.train.batch_size);
    t.read("lr", c.train.lr);
    t.read("weight_decay", c.train.weight_decay);
    t.read("momentum", c.train.momentum);
    t.read("dual", c.train.dual);
    t.read("decay_bn_and_bias", c.train.decay_bn_and_bias);
    t.read("checkpoint_every", c.checkpoint_every);
    if (t.has("main_policy")) c.train.main_policy = parse_policy(t.raw("main_policy"), t.path("main_policy"));
    if (t.has("aux_policy")) c.train.aux_policy = parse_policy(t.raw("aux_policy"), t.path("aux_policy"));
    if (t.has("alternate_policy")) {
      const json& alt = t.raw("alternate_policy");
      if (alt.is_null()) {
        c.train.alternate_policy.reset();
      } else {
        c.train.alternate_policy = parse_policy(alt, t.path("alternate_policy"));
      }
    }
    t.finish();
  }

  if (r.has("eval")) {
    Section e = r.child("eval");
    e.read("lambdas", c.eval.lambdas);
    if (e.has("corruptions")) {
      std::vector<std::string> names;
      e.read("corruptions", names);
      c.eval.corruptions.clear();
      for (const auto& n : names) {
        try {
          c.eval.corruptions.push_back(parse_corruption(n));
        } catch (const ConfigError& err) {
          throw ConfigError(e.path("corruptions") + ": " + err.what());
        }
      }
    }
    e.read("corruption_samples", c.eval.corruption_samples);
    e.read("compute_ce", c.eval.compute_ce);
    e.read("ce_baseline", c.eval.ce_baseline);
    if (e.has("fourier")) {
      Section f = e.child("fourier");
      f.read("norm", c.eval.fourier_norm);
      f.read("samples", c.eval.fourier_samples);
      f.read("predictors", c.eval.fourier_predictors);
      f.finish();
    }
    if (e.has("lowpass")) {
      Section l = e.child("lowpass");
      l.read("bandwidths", c.eval.lowpass_bandwidths);
      l.read("samples", c.eval.lowpass_samples);
      l.finish();
    }
    if (e.has("affinity")) {
      Section a = e.child("affinity");
      if (a.has("policies")) {
        const json& list = a.raw("policies");
        if (!list.is_array()) throw ConfigError(a.path("policies") + ": expected an array");
        c.eval.affinity_policies.clear();
        for (std::size_t i = 0; i < list.size(); ++i) {
          c.eval.affinity_policies.push_back(
              parse_policy(list[i], a.path("policies") + "[" + std::to_string(i) + "]"));
        }
      }
      a.finish();
    }
    e.finish();
  }
  r.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::string& preset_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), preset_override);
}

std::string resolved_json(const ExperimentConfig& c) {
  json corruptions = json::array();
  for (Corruption k : c.eval.corruptions) corruptions.push_back(corruption_name(k));
  json affinity = json::array();
  for (const auto& p : c.eval.affinity_policies) affinity.push_back(policy_json(p));
  const auto& s = c.data.synthetic;
  json root = {
      {"seed", c.train.seed},
      {"data",
       {{"source", c.data.source},
        {"root", c.data.root},
        {"train_subset", c.data.train_subset},
        {"test_subset", c.data.test_subset},
        {"synthetic",
         {{"classes", s.classes},
          {"n_train", s.n_train},
          {"n_test", s.n_test},
          {"size", s.size},
          {"seed", s.seed},
          {"noise", s.noise}}}}},
      {"model",
       {{"depth", c.train.model.depth},
        {"width", c.train.model.width},
        {"bn_mode", bn_mode_name(c.train.model.bn_mode)}}},
      {"train",
       {{"preset", c.preset},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"momentum", c.train.momentum},
        {"dual", c.train.dual},
        {"decay_bn_and_bias", c.train.decay_bn_and_bias},
        {"checkpoint_every", c.checkpoint_every},
        {"main_policy", policy_json(c.train.main_policy)},
        {"aux_policy", policy_json(c.train.aux_policy)},
        {"alternate_policy",
         c.train.alternate_policy ? policy_json(*c.train.alternate_policy) : json(nullptr)}}},
      {"eval",
       {{"lambdas", c.eval.lambdas},
        {"corruptions", corruptions},
        {"corruption_samples", c.eval.corruption_samples},
        {"compute_ce", c.eval.compute_ce},
        {"ce_baseline", c.eval.ce_baseline},
        {"fourier",
         {{"norm", c.eval.fourier_norm},
          {"samples", c.eval.fourier_samples},
          {"predictors", c.eval.fourier_predictors}}},
        {"lowpass",
         {{"bandwidths", c.eval.lowpass_bandwidths}, {"samples", c.eval.lowpass_samples}}},
        {"affinity", {{"policies", affinity}}}}}};
  return root.dump(2) + "\n";
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t config_digest(const ExperimentConfig& config) {
  const std::string text = resolved_json(config);
  return fnv1a({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace sepbn
