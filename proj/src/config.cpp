#include "fdfo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fdfo/checkpoint.hpp"
#include "json.hpp"

namespace fdfo {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& msg) {
  throw ConfigError(origin + ": " + msg);
}

void require_keys(const json& obj, const std::string& origin,
                  const std::string& section,
                  const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(origin, section + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      fail(origin, "unknown key '" + it.key() + "' in " + section);
    }
  }
}

double get_num(const json& obj, const std::string& origin,
               const std::string& section, const std::string& key,
               double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) fail(origin, section + "." + key + " must be a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& origin,
            const std::string& section, const std::string& key, int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) {
    fail(origin, section + "." + key + " must be an integer");
  }
  return v.get<int>();
}

bool get_bool(const json& obj, const std::string& origin,
              const std::string& section, const std::string& key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) fail(origin, section + "." + key + " must be a boolean");
  return v.get<bool>();
}

std::string get_str(const json& obj, const std::string& origin,
                    const std::string& section, const std::string& key,
                    const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) fail(origin, section + "." + key + " must be a string");
  return v.get<std::string>();
}

Vec get_vec(const json& obj, const std::string& origin,
            const std::string& section, const std::string& key,
            const Vec& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array()) {
    fail(origin, section + "." + key + " must be an array of numbers");
  }
  Vec out;
  for (const json& e : v) {
    if (!e.is_number()) {
      fail(origin, section + "." + key + " must be an array of numbers");
    }
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<int> get_ints(const json& obj, const std::string& origin,
                          const std::string& section, const std::string& key,
                          const std::vector<int>& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array()) {
    fail(origin, section + "." + key + " must be an array of integers");
  }
  std::vector<int> out;
  for (const json& e : v) {
    if (!e.is_number_integer()) {
      fail(origin, section + "." + key + " must be an array of integers");
    }
    out.push_back(e.get<int>());
  }
  return out;
}

std::string line_anchor(const std::string& text, size_t byte) {
  size_t line = 1, col = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + " (" + line_anchor(text, e.byte) +
                      "): " + e.what());
  }
  require_keys(root, origin, "top level",
               {"dataset", "model", "pretrain", "reward", "posttrain", "seed",
                "out"});

  ExperimentConfig cfg;
  cfg.text_hash = fnv1a(text);

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    require_keys(d, origin, "dataset", {"name", "sigma_d"});
    cfg.dataset = get_str(d, origin, "dataset", "name", cfg.dataset);
    cfg.sigma_d = get_num(d, origin, "dataset", "sigma_d", cfg.sigma_d);
  }
  if (root.contains("model")) {
    const json& m = root.at("model");
    require_keys(m, origin, "model", {"hidden", "layers", "embed"});
    cfg.model.hidden = get_int(m, origin, "model", "hidden", cfg.model.hidden);
    cfg.model.layers = get_int(m, origin, "model", "layers", cfg.model.layers);
    cfg.model.embed = get_int(m, origin, "model", "embed", cfg.model.embed);
    if (cfg.model.hidden < 1 || cfg.model.layers < 1 || cfg.model.embed < 1) {
      fail(origin, "model dims must be >= 1");
    }
  }
  if (root.contains("pretrain")) {
    const json& p = root.at("pretrain");
    require_keys(p, origin, "pretrain",
                 {"steps", "batch", "lr", "weight_decay", "p_uncond",
                  "log_every"});
    cfg.pretrain.steps = get_int(p, origin, "pretrain", "steps", cfg.pretrain.steps);
    cfg.pretrain.batch = get_int(p, origin, "pretrain", "batch", cfg.pretrain.batch);
    cfg.pretrain.lr = get_num(p, origin, "pretrain", "lr", cfg.pretrain.lr);
    cfg.pretrain.weight_decay =
        get_num(p, origin, "pretrain", "weight_decay", cfg.pretrain.weight_decay);
    cfg.pretrain.p_uncond =
        get_num(p, origin, "pretrain", "p_uncond", cfg.pretrain.p_uncond);
    cfg.pretrain.log_every =
        get_int(p, origin, "pretrain", "log_every", cfg.pretrain.log_every);
    if (cfg.pretrain.steps < 0 || cfg.pretrain.batch < 1) {
      fail(origin, "pretrain.steps must be >= 0 and pretrain.batch >= 1");
    }
    if (cfg.pretrain.p_uncond < 0.0 || cfg.pretrain.p_uncond > 1.0) {
      fail(origin, "pretrain.p_uncond must lie in [0,1]");
    }
  }
  if (root.contains("reward")) {
    const json& r = root.at("reward");
    require_keys(r, origin, "reward",
                 {"kind", "gain", "u", "mu", "b", "tau", "preferred", "scale"});
    cfg.reward.kind = get_str(r, origin, "reward", "kind", cfg.reward.kind);
    cfg.reward.gain = get_num(r, origin, "reward", "gain", cfg.reward.gain);
    cfg.reward.u = get_vec(r, origin, "reward", "u", cfg.reward.u);
    cfg.reward.mu = get_vec(r, origin, "reward", "mu", cfg.reward.mu);
    cfg.reward.b = get_vec(r, origin, "reward", "b", cfg.reward.b);
    cfg.reward.tau = get_num(r, origin, "reward", "tau", cfg.reward.tau);
    cfg.reward.preferred =
        get_ints(r, origin, "reward", "preferred", cfg.reward.preferred);
    cfg.reward.scale = get_num(r, origin, "reward", "scale", cfg.reward.scale);
  }
  if (root.contains("posttrain")) {
    const json& p = root.at("posttrain");
    require_keys(p, origin, "posttrain",
                 {"algo", "pairs", "batches", "steps", "schedule", "clip_style",
                  "eps_clip", "eps_spo", "kl_weight", "cfg_scale", "weight_mode",
                  "shared_init_noise", "deterministic_second",
                  "reward_gradient_mode", "lr", "weight_decay", "epochs",
                  "group_size", "ckpt_every"});
    PostTrainConfig& pt = cfg.posttrain;
    pt.algo = get_str(p, origin, "posttrain", "algo", pt.algo);
    pt.pairs = get_int(p, origin, "posttrain", "pairs", pt.pairs);
    pt.batches = get_int(p, origin, "posttrain", "batches", pt.batches);
    pt.steps = get_int(p, origin, "posttrain", "steps", pt.steps);
    if (p.contains("schedule")) {
      const json& s = p.at("schedule");
      require_keys(s, origin, "posttrain.schedule",
                   {"family", "gamma", "mu", "sigma", "width", "gain"});
      pt.sched.family =
          get_str(s, origin, "posttrain.schedule", "family", pt.sched.family);
      pt.sched.gamma =
          get_num(s, origin, "posttrain.schedule", "gamma", pt.sched.gamma);
      pt.sched.mu = get_num(s, origin, "posttrain.schedule", "mu", pt.sched.mu);
      pt.sched.sigma =
          get_num(s, origin, "posttrain.schedule", "sigma", pt.sched.sigma);
      pt.sched.width =
          get_num(s, origin, "posttrain.schedule", "width", pt.sched.width);
      pt.sched.gain =
          get_num(s, origin, "posttrain.schedule", "gain", pt.sched.gain);
    }
    pt.clip_style = get_str(p, origin, "posttrain", "clip_style", pt.clip_style);
    pt.eps_clip = get_num(p, origin, "posttrain", "eps_clip", pt.eps_clip);
    pt.eps_spo = get_num(p, origin, "posttrain", "eps_spo", pt.eps_spo);
    pt.kl_weight = get_num(p, origin, "posttrain", "kl_weight", pt.kl_weight);
    pt.cfg_scale = get_num(p, origin, "posttrain", "cfg_scale", pt.cfg_scale);
    pt.weight_mode = get_str(p, origin, "posttrain", "weight_mode", pt.weight_mode);
    pt.shared_init_noise = get_bool(p, origin, "posttrain", "shared_init_noise",
                                    pt.shared_init_noise);
    pt.deterministic_second = get_bool(p, origin, "posttrain",
                                       "deterministic_second",
                                       pt.deterministic_second);
    pt.reward_gradient_mode = get_bool(p, origin, "posttrain",
                                       "reward_gradient_mode",
                                       pt.reward_gradient_mode);
    pt.lr = get_num(p, origin, "posttrain", "lr", pt.lr);
    pt.weight_decay =
        get_num(p, origin, "posttrain", "weight_decay", pt.weight_decay);
    pt.epochs = get_int(p, origin, "posttrain", "epochs", pt.epochs);
    pt.group_size = get_int(p, origin, "posttrain", "group_size", pt.group_size);
    pt.ckpt_every = get_int(p, origin, "posttrain", "ckpt_every", pt.ckpt_every);
    try {
      pt.validate();
    } catch (const std::invalid_argument& e) {
      fail(origin, std::string("posttrain: ") + e.what());
    }
  }
  if (root.contains("seed")) {
    const json& s = root.at("seed");
    if (!s.is_number_integer() || s.get<long long>() < 0) {
      fail(origin, "seed must be a nonnegative integer");
    }
    cfg.seed = s.get<uint64_t>();
  }
  cfg.out = get_str(root, origin, "top level", "out", cfg.out);

  cfg.pretrain.seed = cfg.seed;
  cfg.posttrain.seed = cfg.seed;
  cfg.pretrain.hidden = cfg.model.hidden;
  cfg.pretrain.layers = cfg.model.layers;
  cfg.pretrain.embed = cfg.model.embed;

  // dataset/reward cross-validation happens in the builders below
  make_reward(cfg, make_dataset(cfg));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

DatasetSpec make_dataset(const ExperimentConfig& cfg) {
  try {
    return dataset_from_name(cfg.dataset, cfg.sigma_d);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
}

RewardBinding make_reward(const ExperimentConfig& cfg, const DatasetSpec& data) {
  RewardBinding binding;
  binding.scale = cfg.reward.scale;
  RewardSpec& spec = binding.spec;
  try {
    spec.kind = reward_kind_from_name(cfg.reward.kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("reward: ") + e.what());
  }
  const int d = data.d();
  Vec unit_last(d, 0.0);
  unit_last[d - 1] = 1.0;
  spec.u = cfg.reward.u.empty() ? unit_last : cfg.reward.u;
  spec.mu = cfg.reward.mu.empty() ? Vec(d, 0.0) : cfg.reward.mu;
  spec.b = cfg.reward.b.empty() ? unit_last : cfg.reward.b;
  spec.gain = cfg.reward.gain;
  spec.tau = cfg.reward.tau;
  spec.preferred = cfg.reward.preferred;
  spec.modes = data;
  if (static_cast<int>(spec.u.size()) != d ||
      static_cast<int>(spec.mu.size()) != d ||
      static_cast<int>(spec.b.size()) != d) {
    throw ConfigError("reward: u/mu/b must match the dataset dimension " +
                      std::to_string(d));
  }
  for (int m : spec.preferred) {
    if (m < 0 || m >= data.n_modes()) {
      throw ConfigError("reward: preferred mode id out of range");
    }
  }
  return binding;
}

}  // namespace fdfo
