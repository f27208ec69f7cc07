#pragma once

#include <algorithm>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "dbtanet/checkpoint.hpp"
#include "dbtanet/config.hpp"
#include "dbtanet/data/dataset.hpp"
#include "dbtanet/losses.hpp"
#include "dbtanet/metrics.hpp"
#include "dbtanet/model.hpp"

namespace dbtanet {

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

template <typename T>
struct Batch {
  Tensor<T> images1, images2;  // [B, 3, H, W]
  BatchTargets<T> targets;
};

template <typename T>
Batch<T> make_batch(const std::vector<BiTemporalSample<T>>& samples,
                    const std::vector<size_t>& idx) {
  if (idx.empty()) throw ValidationError("make_batch: empty batch");
  int H = samples[idx[0]].label_t1.h, W = samples[idx[0]].label_t1.w;
  int B = static_cast<int>(idx.size());
  Batch<T> b;
  b.images1 = Tensor<T>(Shape{B, 3, H, W});
  b.images2 = Tensor<T>(Shape{B, 3, H, W});
  b.targets.change = Tensor<T>(Shape{B, 1, H, W});
  b.targets.boundary = Tensor<T>(Shape{B, 1, H, W});
  int64_t HW = int64_t(H) * W;
  b.targets.labels1.resize(size_t(B) * HW);
  b.targets.labels2.resize(size_t(B) * HW);
  for (int i = 0; i < B; ++i) {
    const BiTemporalSample<T>& s = samples[idx[size_t(i)]];
    if (s.label_t1.h != H || s.label_t1.w != W)
      throw ValidationError("make_batch: sample size mismatch within batch");
    std::copy(s.image_t1.data(), s.image_t1.data() + 3 * HW, b.images1.data() + int64_t(i) * 3 * HW);
    std::copy(s.image_t2.data(), s.image_t2.data() + 3 * HW, b.images2.data() + int64_t(i) * 3 * HW);
    for (int64_t p = 0; p < HW; ++p) {
      b.targets.labels1[size_t(i) * HW + p] = s.label_t1.v[size_t(p)];
      b.targets.labels2[size_t(i) * HW + p] = s.label_t2.v[size_t(p)];
      b.targets.change.data()[int64_t(i) * HW + p] = static_cast<T>(s.change.v[size_t(p)]);
      b.targets.boundary.data()[int64_t(i) * HW + p] = static_cast<T>(s.boundary.v[size_t(p)]);
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  ScdScores scores;
  double change_f1 = 0.0;  // binary F1 of the thresholded change map
  int64_t pixels = 0;
};

// Eval-mode forward over all samples; semantic argmax is masked to class 0
// wherever the change probability falls below the threshold, then both
// timestamps accumulate into one confusion matrix.
template <typename T>
EvalResult evaluate_model(DbtaNet<T>& model, const std::vector<BiTemporalSample<T>>& samples,
                          int batch_size, double threshold) {
  if (samples.empty()) throw ValidationError("evaluate: empty dataset");
  model.set_training(false);
  const int C = model.config().classes;
  ConfusionMatrix q(C);
  int64_t tp = 0, fp = 0, fn = 0, pixels = 0;
  for (size_t start = 0; start < samples.size(); start += size_t(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(samples.size(), start + size_t(batch_size)); ++i)
      idx.push_back(i);
    Batch<T> b = make_batch(samples, idx);
    ModelOutputs<T> out = model.forward(b.images1, b.images2);
    int H = b.images1.dim(2), W = b.images1.dim(3);
    int64_t HW = int64_t(H) * W;
    std::vector<int> am1 = argmax_channels(out.preds.sem1_logits);
    std::vector<int> am2 = argmax_channels(out.preds.sem2_logits);
    for (size_t i = 0; i < idx.size(); ++i) {
      const BiTemporalSample<T>& s = samples[idx[i]];
      IntMap pred1(H, W), pred2(H, W), predc(H, W);
      for (int64_t p = 0; p < HW; ++p) {
        T prob = sigmoid_scalar(out.preds.change_logits.data()[int64_t(i) * HW + p]);
        bool changed = double(prob) >= threshold;
        predc.v[size_t(p)] = changed ? 1 : 0;
        pred1.v[size_t(p)] = changed ? am1[i * HW + p] : 0;
        pred2.v[size_t(p)] = changed ? am2[i * HW + p] : 0;
      }
      q.update(pred1, s.label_t1);
      q.update(pred2, s.label_t2);
      for (int64_t p = 0; p < HW; ++p) {
        bool pc = predc.v[size_t(p)] != 0, gc = s.change.v[size_t(p)] != 0;
        tp += pc && gc;
        fp += pc && !gc;
        fn += !pc && gc;
      }
      pixels += HW;
    }
  }
  EvalResult r;
  r.scores = compute_scores(q);
  double denom = 2.0 * double(tp) + double(fp) + double(fn);
  r.change_f1 = denom == 0.0 ? 0.0 : 2.0 * double(tp) / denom;
  r.pixels = pixels;
  return r;
}

// ---------------------------------------------------------------------------
// Datasets from config
// ---------------------------------------------------------------------------

template <typename T>
std::vector<BiTemporalSample<T>> make_train_dataset(const TrainConfig& cfg) {
  if (!cfg.data_train.empty()) return load_dataset<T>(cfg.data_train, cfg.model.classes);
  std::vector<BiTemporalSample<T>> out;
  out.reserve(size_t(cfg.train_samples));
  SceneSpec spec = cfg.scene_spec();
  for (int i = 0; i < cfg.train_samples; ++i) {
    spec.seed = cfg.data_seed + uint64_t(i);
    out.push_back(generate_scene<T>(spec));
  }
  return out;
}

template <typename T>
std::vector<BiTemporalSample<T>> make_val_dataset(const TrainConfig& cfg) {
  if (!cfg.data_train.empty()) {
    if (cfg.data_val.empty())
      throw ValidationError("config: data_val is required when data_train is set");
    return load_dataset<T>(cfg.data_val, cfg.model.classes);
  }
  std::vector<BiTemporalSample<T>> out;
  out.reserve(size_t(cfg.val_samples));
  SceneSpec spec = cfg.scene_spec();
  for (int i = 0; i < cfg.val_samples; ++i) {
    spec.seed = cfg.data_seed + 1000000ull + uint64_t(i);
    out.push_back(generate_scene<T>(spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  LossReport loss;
  ScdScores val;
  double val_change_f1 = 0.0;
};

struct TrainOutcome {
  std::vector<EpochLog> history;
  int best_epoch = 0;
  ScdScores best_val;
  double first_epoch_loss = 0.0;
  double last_epoch_loss = 0.0;
  std::string checkpoint_path;
  uint64_t prior_checksum_before = 0;
  uint64_t prior_checksum_after = 0;
};

inline nlohmann::json history_to_json(const std::vector<EpochLog>& hist) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : hist) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["loss"] = {{"total", e.loss.total}, {"sem", e.loss.sem},      {"change", e.loss.change},
                 {"boundary", e.loss.boundary}, {"similarity", e.loss.similarity}};
    j["val"] = {{"oa", e.val.oa}, {"miou", e.val.miou}, {"sek", e.val.sek}, {"f1", e.val.f1}};
    j["val_change_f1"] = e.val_change_f1;
    arr.push_back(j);
  }
  return arr;
}

template <typename T>
TrainOutcome train_model(const TrainConfig& cfg, DbtaNet<T>& model,
                         const std::vector<BiTemporalSample<T>>& train_set,
                         const std::vector<BiTemporalSample<T>>& val_set, std::ostream& log) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");

  if (!cfg.sam_weights.empty()) {
    if (!model.encoder->prior)
      throw ValidationError("config: sam_weights given but the prior branch is disabled");
    load_state(*model.encoder->prior, read_arrays(cfg.sam_weights));
  }

  // Frozen-branch exclusion, asserted before the first step.
  int64_t prior_params =
      model.encoder->prior ? model.encoder->prior->num_parameters() : 0;
  int64_t total_params = model.num_parameters();
  int64_t trainable_params = model.num_parameters(true);
  if (trainable_params != total_params - prior_params)
    throw TrainingError("optimizer parameter set does not exclude exactly the prior branch");

  AdamW<T> opt(model.trainable_parameters(), static_cast<T>(cfg.learning_rate),
               static_cast<T>(cfg.weight_decay));
  LossWeights<T> lw;
  lw.sem = static_cast<T>(cfg.lambda_sem);
  lw.cd = static_cast<T>(cfg.lambda_cd);
  lw.bd = static_cast<T>(cfg.lambda_bd);
  lw.sim = static_cast<T>(cfg.lambda_sim);
  lw.boundary_pos_weight = static_cast<T>(cfg.boundary_pos_weight);
  lw.similarity_margin = static_cast<T>(cfg.similarity_margin);

  TrainOutcome outcome;
  outcome.prior_checksum_before = model.prior_checksum();
  outcome.checkpoint_path = cfg.checkpoint_path;
  double best_sek = -1e30;

  log << "training: " << train_set.size() << " samples, " << cfg.epochs << " epochs, batch "
      << cfg.batch_size << ", lr " << cfg.learning_rate << ", " << trainable_params
      << " trainable / " << total_params << " total parameters\n";

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t(0));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    model.set_training(true);
    Rng shuffle_rng(cfg.model.seed + 0x517cc1b727220a95ull * uint64_t(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    LossReport mean;
    int nbatches = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      std::vector<size_t> idx(order.begin() + start,
                              order.begin() + std::min(order.size(), start + size_t(cfg.batch_size)));
      std::vector<BiTemporalSample<T>> batch_samples;
      batch_samples.reserve(idx.size());
      for (size_t i : idx) {
        uint64_t aseed = cfg.data_seed ^ (uint64_t(epoch) << 32) ^ (uint64_t(i) << 1);
        batch_samples.push_back(cfg.augment_data ? augment(train_set[i], aseed) : train_set[i]);
      }
      std::vector<size_t> local(batch_samples.size());
      std::iota(local.begin(), local.end(), size_t(0));
      Batch<T> b = make_batch(batch_samples, local);

      Tape<T> tape;
      ModelOutputs<T> out = model.forward(b.images1, b.images2);
      LossResult<T> loss = scd_loss(out, b.targets, lw);
      tape.backward(loss.total);
      opt.step();
      opt.zero_grad();

      mean.total += loss.report.total;
      mean.sem += loss.report.sem;
      mean.change += loss.report.change;
      mean.boundary += loss.report.boundary;
      mean.similarity += loss.report.similarity;
      ++nbatches;
    }
    mean.total /= nbatches;
    mean.sem /= nbatches;
    mean.change /= nbatches;
    mean.boundary /= nbatches;
    mean.similarity /= nbatches;

    EpochLog el;
    el.epoch = epoch;
    el.loss = mean;
    if (!val_set.empty()) {
      EvalResult ev = evaluate_model(model, val_set, cfg.batch_size, cfg.change_threshold);
      el.val = ev.scores;
      el.val_change_f1 = ev.change_f1;
    }
    outcome.history.push_back(el);
    if (epoch == 1) outcome.first_epoch_loss = mean.total;
    outcome.last_epoch_loss = mean.total;

    log << "epoch " << epoch << "/" << cfg.epochs << std::fixed << std::setprecision(4)
        << "  loss total=" << mean.total << " sem=" << mean.sem << " cd=" << mean.change
        << " bd=" << mean.boundary << " sim=" << mean.similarity;
    if (!val_set.empty())
      log << "  | val oa=" << el.val.oa << " miou=" << el.val.miou << " sek=" << el.val.sek
          << " f1=" << el.val.f1 << " changeF1=" << el.val_change_f1;
    log << "\n" << std::defaultfloat << std::setprecision(6);

    bool improved = val_set.empty() ? epoch == cfg.epochs : el.val.sek > best_sek;
    if (improved) {
      best_sek = val_set.empty() ? 0.0 : el.val.sek;
      outcome.best_epoch = epoch;
      outcome.best_val = el.val;
      if (!cfg.checkpoint_path.empty()) {
        nlohmann::json extra;
        extra["config"] = train_config_to_json(cfg);
        extra["epoch"] = epoch;
        extra["history"] = history_to_json(outcome.history);
        save_arrays(cfg.checkpoint_path, model.named_state(), extra);
      }
    }
  }
  outcome.prior_checksum_after = model.prior_checksum();
  return outcome;
}

template <typename T>
std::pair<std::unique_ptr<DbtaNet<T>>, TrainOutcome> run_training(const TrainConfig& cfg,
                                                                  std::ostream& log) {
  auto train_set = make_train_dataset<T>(cfg);
  auto val_set = make_val_dataset<T>(cfg);
  auto model = std::make_unique<DbtaNet<T>>(cfg.model);
  TrainOutcome outcome = train_model(cfg, *model, train_set, val_set, log);
  return {std::move(model), outcome};
}

// Rebuilds the model a checkpoint was trained with and restores its state.
template <typename T>
std::pair<std::unique_ptr<DbtaNet<T>>, TrainConfig> model_from_checkpoint(
    const std::string& path) {
  LoadedArrays loaded = read_arrays(path);
  if (!loaded.manifest.contains("config"))
    throw ValidationError("checkpoint has no config echo: " + path);
  TrainConfig cfg = train_config_from_json(loaded.manifest["config"]);
  auto model = std::make_unique<DbtaNet<T>>(cfg.model);
  load_state(*model, loaded);
  return {std::move(model), cfg};
}

// ---------------------------------------------------------------------------
// Ablation protocol: four flag combinations under shared seeds
// ---------------------------------------------------------------------------

struct AblationRow {
  bool sam = false, gspm = false, btam = false;
  double miou = 0.0, sek = 0.0;
};

template <typename T>
std::vector<AblationRow> run_ablation(const TrainConfig& base, std::ostream& log) {
  const bool flags[4][3] = {
      {false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}};
  std::vector<AblationRow> rows;
  for (int r = 0; r < 4; ++r) {
    TrainConfig cfg = base;
    cfg.model.use_sam_branch = flags[r][0];
    cfg.model.use_gspm = flags[r][1];
    cfg.model.use_btam = flags[r][2];
    if (!cfg.checkpoint_path.empty())
      cfg.checkpoint_path = base.checkpoint_path + ".ablate" + std::to_string(r);
    log << "--- ablation row " << (r + 1) << "/4: sam=" << flags[r][0]
        << " gspm=" << flags[r][1] << " btam=" << flags[r][2] << "\n";
    auto [model, outcome] = run_training<T>(cfg, log);
    AblationRow row;
    row.sam = flags[r][0];
    row.gspm = flags[r][1];
    row.btam = flags[r][2];
    row.miou = outcome.best_val.miou;
    row.sek = outcome.best_val.sek;
    rows.push_back(row);
  }
  return rows;
}

inline std::string ablation_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| +SAM | +GSPM | +BTAM | mIoU | SeK |\n";
  os << "|------|-------|-------|------|-----|\n";
  auto mark = [](bool b) { return b ? "✓" : "✗"; };
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    os << "| " << mark(r.sam) << " | " << mark(r.gspm) << " | " << mark(r.btam) << " | "
       << r.miou << " | " << r.sek << " |\n";
  return os.str();
}

inline nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["flags"] = {{"sam", r.sam}, {"gspm", r.gspm}, {"btam", r.btam}};
    j["miou"] = r.miou;
    j["sek"] = r.sek;
    arr.push_back(j);
  }
  return arr;
}

}  // namespace dbtanet
