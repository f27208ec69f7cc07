#pragma once

#include <json.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "dbtanet/data/synth.hpp"
#include "dbtanet/model.hpp"

namespace dbtanet {

// Flat `key = value` UTF-8 config files. '#' starts a comment; unknown keys
// are errors.
inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(f, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError(path + ":" + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw ValidationError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

namespace detail {

struct KvReader {
  const std::map<std::string, std::string>& kv;
  std::set<std::string> seen;

  bool has(const std::string& k) {
    if (kv.count(k)) {
      seen.insert(k);
      return true;
    }
    return false;
  }
  std::string str(const std::string& k, const std::string& dflt) {
    return has(k) ? kv.at(k) : dflt;
  }
  int integer(const std::string& k, int dflt) {
    if (!has(k)) return dflt;
    try {
      size_t pos = 0;
      int v = std::stoi(kv.at(k), &pos);
      if (pos != kv.at(k).size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ValidationError("config key '" + k + "': expected integer, got '" + kv.at(k) + "'");
    }
  }
  uint64_t u64(const std::string& k, uint64_t dflt) {
    if (!has(k)) return dflt;
    try {
      size_t pos = 0;
      uint64_t v = std::stoull(kv.at(k), &pos);
      if (pos != kv.at(k).size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ValidationError("config key '" + k + "': expected unsigned integer, got '" +
                            kv.at(k) + "'");
    }
  }
  double real(const std::string& k, double dflt) {
    if (!has(k)) return dflt;
    try {
      size_t pos = 0;
      double v = std::stod(kv.at(k), &pos);
      if (pos != kv.at(k).size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ValidationError("config key '" + k + "': expected number, got '" + kv.at(k) + "'");
    }
  }
  bool boolean(const std::string& k, bool dflt) {
    if (!has(k)) return dflt;
    const std::string& v = kv.at(k);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key '" + k + "': expected true/false, got '" + v + "'");
  }
  void finish(const std::string& context) {
    for (const auto& [k, v] : kv)
      if (!seen.count(k))
        throw ValidationError(context + ": unknown config key '" + k + "'");
  }
};

// "64" -> 64x64, "64x80" -> H=64, W=80
inline std::pair<int, int> parse_size(const std::string& s) {
  auto x = s.find('x');
  try {
    if (x == std::string::npos) {
      int v = std::stoi(s);
      return {v, v};
    }
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw ValidationError("bad image_size '" + s + "', expected N or HxW");
  }
}

}  // namespace detail

struct TrainConfig {
  // data: directories when set, otherwise synthetic generation
  std::string data_train;
  std::string data_val;
  int image_h = 64, image_w = 64;
  int train_samples = 200;
  int val_samples = 50;
  double change_ratio = 0.25;
  double noise_std = 0.03;
  int min_shapes = 4, max_shapes = 8;
  uint64_t data_seed = 7;

  ModelConfig model;
  std::string sam_weights;  // optional frozen-branch weights file

  int epochs = 5;
  int batch_size = 8;
  double learning_rate = 0.001;
  double weight_decay = 0.01;
  double lambda_sem = 1.0, lambda_cd = 1.0, lambda_bd = 0.5, lambda_sim = 0.1;
  double boundary_pos_weight = 5.0;
  double similarity_margin = 0.0;
  double change_threshold = 0.5;
  bool augment_data = true;
  std::string checkpoint_path = "dbtanet.ckpt";

  void validate() const {
    model.validate();
    if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    if (learning_rate <= 0) throw ValidationError("config: learning_rate must be positive");
    if (weight_decay < 0) throw ValidationError("config: weight_decay must be >= 0");
    if (lambda_sem < 0 || lambda_cd < 0 || lambda_bd < 0 || lambda_sim < 0)
      throw ValidationError("config: loss weights must be >= 0");
    if (!(change_threshold > 0 && change_threshold < 1))
      throw ValidationError("config: change_threshold must lie in (0,1)");
    if (data_train.empty()) {
      SceneSpec spec = scene_spec();
      spec.validate();
      if (train_samples < 1 || val_samples < 1)
        throw ValidationError("config: sample counts must be >= 1");
    }
  }

  SceneSpec scene_spec() const {
    SceneSpec s;
    s.height = image_h;
    s.width = image_w;
    s.classes = model.classes;
    s.min_shapes = min_shapes;
    s.max_shapes = max_shapes;
    s.change_ratio = change_ratio;
    s.noise_std = noise_std;
    s.seed = data_seed;
    return s;
  }
};

inline void read_train_config(detail::KvReader& r, TrainConfig& c, const std::string& context) {
  c.data_train = r.str("data_train", c.data_train);
  c.data_val = r.str("data_val", c.data_val);
  if (r.has("image_size"))
    std::tie(c.image_h, c.image_w) = detail::parse_size(r.kv.at("image_size"));
  c.train_samples = r.integer("train_samples", c.train_samples);
  c.val_samples = r.integer("val_samples", c.val_samples);
  c.change_ratio = r.real("change_ratio", c.change_ratio);
  c.noise_std = r.real("noise_std", c.noise_std);
  c.min_shapes = r.integer("min_shapes", c.min_shapes);
  c.max_shapes = r.integer("max_shapes", c.max_shapes);
  c.data_seed = r.u64("data_seed", c.data_seed);

  c.model.classes = r.integer("classes", c.model.classes);
  c.model.shallow_channels = r.integer("shallow_channels", c.model.shallow_channels);
  c.model.deep_channels = r.integer("deep_channels", c.model.deep_channels);
  c.model.msa_channels = r.integer("msa_channels", c.model.msa_channels);
  c.model.msa_branch_channels = r.integer("msa_branch_channels", c.model.msa_branch_channels);
  c.model.decoder_channels = r.integer("decoder_channels", c.model.decoder_channels);
  if (r.has("stage_depths")) {
    std::istringstream ss(r.kv.at("stage_depths"));
    std::string tok;
    std::vector<int> depths;
    while (std::getline(ss, tok, ',')) {
      try {
        size_t pos = 0;
        depths.push_back(std::stoi(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ValidationError("config: stage_depths needs comma-separated integers");
      }
    }
    if (depths.size() != 4)
      throw ValidationError("config: stage_depths needs 4 comma-separated integers");
    for (int i = 0; i < 4; ++i) c.model.stage_depths[size_t(i)] = depths[size_t(i)];
  }
  c.model.alpha = r.real("alpha", c.model.alpha);
  c.model.use_sam_branch = r.boolean("use_sam_branch", c.model.use_sam_branch);
  c.model.use_gspm = r.boolean("use_gspm", c.model.use_gspm);
  c.model.use_btam = r.boolean("use_btam", c.model.use_btam);
  c.model.canonical_pair = r.boolean("canonical_pair", c.model.canonical_pair);
  c.model.seed = r.u64("seed", c.model.seed);
  c.model.sam_seed = r.u64("sam_seed", c.model.sam_seed);
  c.sam_weights = r.str("sam_weights", c.sam_weights);

  c.epochs = r.integer("epochs", c.epochs);
  c.batch_size = r.integer("batch_size", c.batch_size);
  c.learning_rate = r.real("learning_rate", c.learning_rate);
  c.weight_decay = r.real("weight_decay", c.weight_decay);
  c.lambda_sem = r.real("lambda_sem", c.lambda_sem);
  c.lambda_cd = r.real("lambda_cd", c.lambda_cd);
  c.lambda_bd = r.real("lambda_bd", c.lambda_bd);
  c.lambda_sim = r.real("lambda_sim", c.lambda_sim);
  c.boundary_pos_weight = r.real("boundary_pos_weight", c.boundary_pos_weight);
  c.similarity_margin = r.real("similarity_margin", c.similarity_margin);
  c.change_threshold = r.real("change_threshold", c.change_threshold);
  c.augment_data = r.boolean("augment", c.augment_data);
  c.checkpoint_path = r.str("checkpoint", c.checkpoint_path);
  r.finish(context);
  c.validate();
}

inline TrainConfig train_config_from_file(const std::string& path) {
  auto kv = parse_kv_file(path);
  detail::KvReader r{kv, {}};
  TrainConfig c;
  read_train_config(r, c, path);
  return c;
}

inline SceneSpec scene_spec_from_file(const std::string& path) {
  auto kv = parse_kv_file(path);
  detail::KvReader r{kv, {}};
  SceneSpec s;
  if (r.has("image_size")) std::tie(s.height, s.width) = detail::parse_size(kv.at("image_size"));
  s.classes = r.integer("classes", s.classes);
  s.min_shapes = r.integer("min_shapes", s.min_shapes);
  s.max_shapes = r.integer("max_shapes", s.max_shapes);
  s.change_ratio = r.real("change_ratio", s.change_ratio);
  s.noise_std = r.real("noise_std", s.noise_std);
  s.seed = r.u64("seed", s.seed);
  r.finish(path);
  s.validate();
  return s;
}

// JSON echo for checkpoints: enough to rebuild the model and rerun
// evaluation with identical semantics.
inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["data_train"] = c.data_train;
  j["data_val"] = c.data_val;
  j["image_h"] = c.image_h;
  j["image_w"] = c.image_w;
  j["train_samples"] = c.train_samples;
  j["val_samples"] = c.val_samples;
  j["change_ratio"] = c.change_ratio;
  j["noise_std"] = c.noise_std;
  j["min_shapes"] = c.min_shapes;
  j["max_shapes"] = c.max_shapes;
  j["data_seed"] = c.data_seed;
  j["classes"] = c.model.classes;
  j["shallow_channels"] = c.model.shallow_channels;
  j["deep_channels"] = c.model.deep_channels;
  j["msa_channels"] = c.model.msa_channels;
  j["msa_branch_channels"] = c.model.msa_branch_channels;
  j["decoder_channels"] = c.model.decoder_channels;
  j["stage_depths"] = c.model.stage_depths;
  j["alpha"] = c.model.alpha;
  j["use_sam_branch"] = c.model.use_sam_branch;
  j["use_gspm"] = c.model.use_gspm;
  j["use_btam"] = c.model.use_btam;
  j["canonical_pair"] = c.model.canonical_pair;
  j["seed"] = c.model.seed;
  j["sam_seed"] = c.model.sam_seed;
  j["sam_weights"] = c.sam_weights;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["lambda_sem"] = c.lambda_sem;
  j["lambda_cd"] = c.lambda_cd;
  j["lambda_bd"] = c.lambda_bd;
  j["lambda_sim"] = c.lambda_sim;
  j["boundary_pos_weight"] = c.boundary_pos_weight;
  j["similarity_margin"] = c.similarity_margin;
  j["change_threshold"] = c.change_threshold;
  j["augment"] = c.augment_data;
  j["checkpoint"] = c.checkpoint_path;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.data_train = j.value("data_train", c.data_train);
  c.data_val = j.value("data_val", c.data_val);
  c.image_h = j.value("image_h", c.image_h);
  c.image_w = j.value("image_w", c.image_w);
  c.train_samples = j.value("train_samples", c.train_samples);
  c.val_samples = j.value("val_samples", c.val_samples);
  c.change_ratio = j.value("change_ratio", c.change_ratio);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.min_shapes = j.value("min_shapes", c.min_shapes);
  c.max_shapes = j.value("max_shapes", c.max_shapes);
  c.data_seed = j.value("data_seed", c.data_seed);
  c.model.classes = j.value("classes", c.model.classes);
  c.model.shallow_channels = j.value("shallow_channels", c.model.shallow_channels);
  c.model.deep_channels = j.value("deep_channels", c.model.deep_channels);
  c.model.msa_channels = j.value("msa_channels", c.model.msa_channels);
  c.model.msa_branch_channels = j.value("msa_branch_channels", c.model.msa_branch_channels);
  c.model.decoder_channels = j.value("decoder_channels", c.model.decoder_channels);
  if (j.contains("stage_depths")) c.model.stage_depths = j["stage_depths"].get<std::array<int, 4>>();
  c.model.alpha = j.value("alpha", c.model.alpha);
  c.model.use_sam_branch = j.value("use_sam_branch", c.model.use_sam_branch);
  c.model.use_gspm = j.value("use_gspm", c.model.use_gspm);
  c.model.use_btam = j.value("use_btam", c.model.use_btam);
  c.model.canonical_pair = j.value("canonical_pair", c.model.canonical_pair);
  c.model.seed = j.value("seed", c.model.seed);
  c.model.sam_seed = j.value("sam_seed", c.model.sam_seed);
  c.sam_weights = j.value("sam_weights", c.sam_weights);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lambda_sem = j.value("lambda_sem", c.lambda_sem);
  c.lambda_cd = j.value("lambda_cd", c.lambda_cd);
  c.lambda_bd = j.value("lambda_bd", c.lambda_bd);
  c.lambda_sim = j.value("lambda_sim", c.lambda_sim);
  c.boundary_pos_weight = j.value("boundary_pos_weight", c.boundary_pos_weight);
  c.similarity_margin = j.value("similarity_margin", c.similarity_margin);
  c.change_threshold = j.value("change_threshold", c.change_threshold);
  c.augment_data = j.value("augment", c.augment_data);
  c.checkpoint_path = j.value("checkpoint", c.checkpoint_path);
  c.validate();
  return c;
}

}  // namespace dbtanet
