// sqa  --  non-intrusive speech quality assessment toolkit.
//
// Subcommands cover the full workflow: feature extraction, rating cleaning,
// study/corpus simulation, training, prediction, evaluation, K-fold
// cross-validation, and the architecture ablation.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sqa/sqa.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- option bundles ----

struct ModelOpts {
  int base_hidden = 256;
  std::string pyramid = "128,64,32";
  int reduction = 2;
  bool no_pyramid = false;
  bool no_attention = false;
  int attention_dim = 64;
  int fc_hidden = 32;
  std::uint64_t model_seed = 1;

  sqa::ModelConfig to_config(int input_dim) const {
    sqa::ModelConfig cfg;
    cfg.input_dim = input_dim;
    cfg.base_hidden = base_hidden;
    cfg.pyramid_hidden.clear();
    if (!pyramid.empty() && pyramid != "none") {
      std::string cur;
      for (char c : pyramid + ",") {
        if (c == ',') {
          if (!cur.empty()) {
            try {
              cfg.pyramid_hidden.push_back(std::stoi(cur));
            } catch (const std::exception&) {
              sqa::fail(sqa::Errc::config, "bad pyramid width '" + cur + "'");
            }
            cur.clear();
          }
        } else {
          cur.push_back(c);
        }
      }
    }
    cfg.reduction_factor = reduction;
    cfg.use_pyramid = !no_pyramid;
    cfg.use_attention = !no_attention;
    cfg.attention_dim = attention_dim;
    cfg.fc_hidden = fc_hidden;
    cfg.seed = model_seed;
    sqa::validate_model_config(cfg);
    return cfg;
  }

  json to_json() const {
    return json{{"base-hidden", base_hidden},   {"pyramid", pyramid},
                {"reduction", reduction},       {"no-pyramid", no_pyramid},
                {"no-attention", no_attention}, {"attention-dim", attention_dim},
                {"fc-hidden", fc_hidden},       {"model-seed", model_seed}};
  }
};

void add_model_opts(CLI::App* sub, ModelOpts& o) {
  sub->add_option("--base-hidden", o.base_hidden, "Base layer width per direction");
  sub->add_option("--pyramid", o.pyramid, "Comma list of pyramid widths per direction, or 'none'");
  sub->add_option("--reduction", o.reduction, "Pyramid reduction factor M");
  sub->add_flag("--no-pyramid", o.no_pyramid, "Plain BLSTM stack instead of the pyramid");
  sub->add_flag("--no-attention", o.no_attention, "Disable self-attention");
  sub->add_option("--attention-dim", o.attention_dim, "Attention head dimension");
  sub->add_option("--fc-hidden", o.fc_hidden, "Decode FC width");
  sub->add_option("--model-seed", o.model_seed, "Weight initialization seed");
}

struct TrainOpts {
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-3;
  double clip_norm = 5.0;
  std::uint64_t shuffle_seed = 17;

  sqa::TrainConfig to_config() const {
    sqa::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.adam.lr = lr;
    cfg.clip_norm = clip_norm;
    cfg.shuffle_seed = shuffle_seed;
    return cfg;
  }

  json to_json() const {
    return json{{"epochs", epochs},
                {"batch-size", batch_size},
                {"lr", lr},
                {"clip-norm", clip_norm},
                {"shuffle-seed", shuffle_seed}};
  }
};

void add_train_opts(CLI::App* sub, TrainOpts& o) {
  sub->add_option("--epochs", o.epochs, "Training epochs");
  sub->add_option("--batch-size", o.batch_size, "Minibatch size");
  sub->add_option("--lr", o.lr, "Adam learning rate");
  sub->add_option("--clip-norm", o.clip_norm, "Global gradient norm clip");
  sub->add_option("--shuffle-seed", o.shuffle_seed, "Epoch shuffle seed");
}

struct SplitOpts {
  double val_frac = 0.1;
  double test_frac = 0.2;
  std::uint64_t split_seed = 7;

  sqa::SplitConfig to_config(int folds) const {
    sqa::SplitConfig cfg;
    cfg.val_frac = val_frac;
    cfg.test_frac = test_frac;
    cfg.train_frac = 1.0 - val_frac - test_frac;
    cfg.n_folds = folds;
    cfg.seed = split_seed;
    return cfg;
  }

  json to_json() const {
    return json{{"val-frac", val_frac}, {"test-frac", test_frac}, {"split-seed", split_seed}};
  }
};

void add_split_opts(CLI::App* sub, SplitOpts& o) {
  sub->add_option("--val-frac", o.val_frac, "Validation fraction");
  sub->add_option("--test-frac", o.test_frac, "Test fraction");
  sub->add_option("--split-seed", o.split_seed, "Split shuffle seed");
}

void dump_config_file(const std::string& path, const std::string& subcommand, const json& j) {
  if (path.empty()) return;
  std::ofstream out(path);
  sqa::require(out.good(), sqa::Errc::io, "cannot write '" + path + "'");
  json wrapped = {{"subcommand", subcommand}, {"options", j}};
  out << wrapped.dump(2) << '\n';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  sqa::require(out.good(), sqa::Errc::io, "cannot write '" + path + "'");
  return out;
}

// ---- shared data plumbing ----

struct Dataset {
  std::map<std::string, sqa::Spectrogram> raw;  // unnormalized features
  std::map<std::string, double> mos;
  std::map<std::string, double> ci95;
  std::size_t bins = 0;
};

Dataset load_dataset(const std::string& features_dir, const std::vector<sqa::StimulusMOS>& rows,
                     bool skip_missing = false) {
  sqa::require(!rows.empty(), sqa::Errc::empty_input, "empty MOS table");
  Dataset ds;
  std::size_t skipped = 0;
  for (const auto& r : rows) {
    fs::path p = fs::path(features_dir) / (r.stimulus_id + ".sqft");
    if (!fs::exists(p)) {
      sqa::require(skip_missing, sqa::Errc::io, "missing feature file '" + p.string() + "'");
      ++skipped;
      continue;
    }
    sqa::Spectrogram spec = sqa::load_features(p.string());
    if (ds.bins == 0) ds.bins = spec.bins;
    sqa::require(spec.bins == ds.bins, sqa::Errc::dimension,
                 "inconsistent feature dimension in '" + p.string() + "'");
    ds.raw.emplace(r.stimulus_id, std::move(spec));
    ds.mos[r.stimulus_id] = r.mos;
    ds.ci95[r.stimulus_id] = r.ci95;
  }
  sqa::require(!ds.raw.empty(), sqa::Errc::empty_input, "no stimuli with feature files");
  if (skipped > 0)
    std::cout << "skipped " << skipped << " stimuli without feature files\n";
  return ds;
}

sqa::FeatureStats stats_over(const Dataset& ds, const std::vector<std::string>& ids) {
  sqa::StatsAccumulator acc(ds.bins);
  for (const auto& id : ids) acc.add(ds.raw.at(id));
  return acc.finish();
}

std::vector<sqa::TrainExample> make_examples(const Dataset& ds,
                                             const std::vector<std::string>& ids,
                                             const sqa::FeatureStats& stats) {
  std::vector<sqa::TrainExample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    sqa::TrainExample ex;
    ex.id = id;
    ex.X = sqa::to_input_matrix(sqa::normalize(ds.raw.at(id), stats));
    ex.target = ds.mos.at(id);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<sqa::StimulusMOS> rows_with_features(const std::vector<sqa::StimulusMOS>& rows,
                                                 const Dataset& ds) {
  std::vector<sqa::StimulusMOS> out;
  for (const auto& r : rows)
    if (ds.raw.count(r.stimulus_id)) out.push_back(r);
  return out;
}

struct FoldOutcome {
  sqa::FoldResult result;
  sqa::TrainResult training;
};

FoldOutcome run_fold(const Dataset& ds, const sqa::SplitPlan& plan, const sqa::ModelConfig& mcfg,
                     const sqa::TrainConfig& tcfg) {
  sqa::FeatureStats stats = stats_over(ds, plan.train);
  auto train_set = make_examples(ds, plan.train, stats);
  auto val_set = make_examples(ds, plan.val, stats);

  sqa::ModelParams params = sqa::init_params(mcfg);
  FoldOutcome out;
  out.training = sqa::train(mcfg, params, train_set, val_set, tcfg);
  sqa::require(!out.training.diverged, sqa::Errc::divergence, "training diverged");

  for (const auto& id : plan.test) {
    sqa::Spectrogram spec = sqa::normalize(ds.raw.at(id), stats);
    out.result.preds.push_back(sqa::predict_mos(mcfg, params, sqa::to_input_matrix(spec)));
    out.result.targets.push_back(ds.mos.at(id));
    out.result.ci95.push_back(ds.ci95.at(id));
  }
  out.result.report = sqa::evaluate(out.result.preds, out.result.targets, out.result.ci95, 0);
  return out;
}

std::vector<std::pair<std::string, double>> read_predictions(const std::string& path) {
  std::ifstream in(path);
  sqa::require(in.good(), sqa::Errc::io, "cannot open '" + path + "'");
  std::string line;
  sqa::require(static_cast<bool>(std::getline(in, line)), sqa::Errc::parse,
               "empty predictions file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  sqa::require(line == "stimulus_id,pred_mos", sqa::Errc::parse, "bad predictions header");
  std::vector<std::pair<std::string, double>> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    sqa::require(comma != std::string::npos, sqa::Errc::parse, "bad predictions row");
    try {
      out.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      sqa::fail(sqa::Errc::parse, "bad prediction value in '" + line + "'");
    }
  }
  return out;
}

// ---- subcommands ----

int cmd_features(const std::vector<std::string>& inputs, const std::string& in_dir,
                 const std::string& out_dir, const std::string& stats_out,
                 const std::string& normalize_with, double frame_ms, double hop_ms,
                 std::size_t fft_len, bool strict, const std::string& dump_cfg) {
  sqa::FrameConfig cfg = strict ? sqa::FrameConfig::strict_profile() : sqa::FrameConfig{};
  if (frame_ms > 0) cfg.frame_len_ms = frame_ms;
  if (hop_ms > 0) cfg.hop_ms = hop_ms;
  if (fft_len > 0) cfg.fft_len = fft_len;

  std::vector<std::string> paths = inputs;
  if (!in_dir.empty()) {
    sqa::require(fs::is_directory(in_dir), sqa::Errc::io, "'" + in_dir + "' is not a directory");
    for (const auto& e : fs::directory_iterator(in_dir))
      if (e.path().extension() == ".wav") paths.push_back(e.path().string());
  }
  std::sort(paths.begin(), paths.end());
  sqa::require(!paths.empty(), sqa::Errc::empty_input, "no input audio files");

  dump_config_file(dump_cfg, "features",
                   json{{"frame-ms", cfg.frame_len_ms},
                        {"hop-ms", cfg.hop_ms},
                        {"fft-len", cfg.fft_len},
                        {"strict-profile", strict},
                        {"inputs", paths.size()},
                        {"out-dir", out_dir}});

  fs::create_directories(out_dir);
  sqa::FeatureStats norm_stats;
  if (!normalize_with.empty()) norm_stats = sqa::load_feature_stats(normalize_with);

  sqa::StatsAccumulator acc(cfg.bins());
  std::size_t written = 0;
  for (const auto& p : paths) {
    sqa::AudioClip clip = sqa::load_audio(p);
    sqa::Spectrogram spec = sqa::extract_features(clip, cfg);
    acc.add(spec);
    if (!normalize_with.empty()) spec = sqa::normalize(spec, norm_stats);
    fs::path out = fs::path(out_dir) / (clip.id + ".sqft");
    sqa::save_features(spec, out.string());
    ++written;
  }
  if (!stats_out.empty()) sqa::save_feature_stats(acc.finish(), stats_out);

  std::cout << "wrote " << written << " feature files to " << out_dir << " ("
            << cfg.bins() << " bins)\n";
  return 0;
}

int cmd_clean(const std::string& ratings_path, const std::string& out_path,
              const std::string& rejections_path, const std::string& audit_path,
              const std::string& profile, double z_threshold, double max_unanswered, double eps,
              int min_pts, int trees, double if_threshold, std::uint64_t seed,
              const std::string& dump_cfg) {
  sqa::CleaningProfile prof;
  if (profile == "practical")
    prof = sqa::CleaningProfile::practical;
  else if (profile == "fidelity")
    prof = sqa::CleaningProfile::fidelity;
  else
    sqa::fail(sqa::Errc::config, "unknown profile '" + profile + "'");

  sqa::CleaningConfig cfg = sqa::CleaningConfig::with_profile(prof);
  if (z_threshold > 0) cfg.z_threshold = z_threshold;
  if (max_unanswered >= 0) cfg.max_unanswered_frac = max_unanswered;
  if (eps > 0) cfg.dbscan.eps = eps;
  if (min_pts > 0) cfg.dbscan.min_pts = min_pts;
  if (trees > 0) cfg.iforest.n_trees = trees;
  if (if_threshold > 0) cfg.iforest.score_threshold = if_threshold;
  cfg.seed = seed;

  dump_config_file(dump_cfg, "clean",
                   json{{"profile", profile},
                        {"z-threshold", cfg.z_threshold},
                        {"max-unanswered", cfg.max_unanswered_frac},
                        {"eps", cfg.dbscan.eps},
                        {"min-pts", cfg.dbscan.min_pts},
                        {"trees", cfg.iforest.n_trees},
                        {"if-threshold", cfg.iforest.score_threshold},
                        {"seed", cfg.seed}});

  auto table = sqa::ingest_ratings_file(ratings_path);
  sqa::CleaningOutcome outcome = sqa::clean_ratings(table, cfg);

  {
    auto out = open_out(out_path);
    sqa::write_mos_csv(outcome.mos, out);
  }
  if (!rejections_path.empty()) {
    auto out = open_out(rejections_path);
    sqa::write_rejections_jsonl(outcome.rejections, out);
  }
  if (!audit_path.empty()) {
    auto out = open_out(audit_path);
    sqa::write_audit_jsonl(outcome.audit, out);
  }

  std::map<std::string, int> per_stage;
  for (const auto& a : outcome.audit) per_stage[a.stage]++;
  std::cout << "ingested " << table.size() << " ratings; removed reject=" << per_stage["reject"]
            << " zscore=" << per_stage["zscore"] << " rescale=" << per_stage["rescale"]
            << " ensemble=" << per_stage["ensemble"] << "; surviving "
            << outcome.surviving.size() << "; stimuli " << outcome.mos.size() << "\n";
  if (!outcome.empty_stimuli.empty()) {
    std::cout << "stimuli with no surviving ratings:";
    for (const auto& s : outcome.empty_stimuli) std::cout << ' ' << s;
    std::cout << "\n";
  }
  return 0;
}

int cmd_simulate(int n_stimuli, const std::string& out_ratings, const std::string& out_truth,
                 const std::string& out_spammers, const std::string& audio_dir,
                 sqa::StudyConfig study, sqa::SynthAudioConfig synth, std::uint64_t master_seed,
                 bool seed_given, const std::string& dump_cfg) {
  if (seed_given) {
    study.seed = sqa::derive_seed(master_seed, 1);
    synth.seed = sqa::derive_seed(master_seed, 2);
  }

  dump_config_file(dump_cfg, "simulate",
                   json{{"n-stimuli", n_stimuli},
                        {"raters", study.raters_per_hit},
                        {"trials-per-hit", study.trials_per_hit},
                        {"spammer-frac", study.spammer_frac},
                        {"unanswered-prob", study.unanswered_prob},
                        {"study-seed", study.seed},
                        {"synth-seed", synth.seed},
                        {"audio", !audio_dir.empty()}});

  std::vector<std::pair<std::string, double>> stimuli;
  std::vector<sqa::CorpusItem> corpus;
  if (!audio_dir.empty()) {
    corpus = sqa::build_corpus(n_stimuli, synth, study.test_mos_lo, study.test_mos_hi);
    fs::create_directories(audio_dir);
    for (const auto& item : corpus) {
      stimuli.emplace_back(item.clip.id, item.true_mos);
      fs::path p = fs::path(audio_dir) / (item.clip.id + ".wav");
      sqa::save_audio(item.clip, p.string());
    }
  } else {
    stimuli = sqa::make_test_stimuli(n_stimuli, study);
  }

  sqa::StudyResult res = sqa::generate_study(stimuli, study);
  {
    auto out = open_out(out_ratings);
    sqa::write_ratings_csv(res.table, out);
  }
  if (!out_truth.empty()) {
    auto out = open_out(out_truth);
    out << "stimulus_id,true_mos\n";
    char buf[96];
    for (const auto& [id, q] : stimuli) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f", id.c_str(), q);
      out << buf << '\n';
    }
  }
  if (!out_spammers.empty()) {
    auto out = open_out(out_spammers);
    for (const auto& w : res.spammer_workers) out << w << '\n';
  }

  std::cout << "simulated " << res.table.size() << " ratings over " << stimuli.size()
            << " test stimuli (" << res.spammer_workers.size() << " spammer workers)";
  if (!audio_dir.empty()) std::cout << "; wrote " << corpus.size() << " clips to " << audio_dir;
  std::cout << "\n";
  return 0;
}

int cmd_train(const std::string& features_dir, const std::string& mos_path,
              const std::string& out_path, const std::string& history_path, bool no_split,
              bool skip_missing, const ModelOpts& mo, const TrainOpts& to, const SplitOpts& so,
              const std::string& dump_cfg) {
  auto rows = sqa::read_mos_csv_file(mos_path);
  Dataset ds = load_dataset(features_dir, rows, skip_missing);
  rows = rows_with_features(rows, ds);

  json j = {{"features-dir", features_dir}, {"mos", mos_path},   {"out", out_path},
            {"no-split", no_split},         {"model", mo.to_json()}, {"train", to.to_json()},
            {"split", so.to_json()}};
  dump_config_file(dump_cfg, "train", j);

  sqa::SplitPlan plan;
  if (no_split) {
    for (const auto& [id, _] : ds.mos) plan.train.push_back(id);
  } else {
    int folds = static_cast<int>(std::llround(1.0 / so.test_frac));
    plan = sqa::make_single_split(rows, so.to_config(std::max(folds, 1)));
  }

  sqa::FeatureStats stats = stats_over(ds, plan.train);
  auto train_set = make_examples(ds, plan.train, stats);
  auto val_set = make_examples(ds, plan.val, stats);

  sqa::ModelConfig mcfg = mo.to_config(static_cast<int>(ds.bins));
  sqa::ModelParams params = sqa::init_params(mcfg);
  sqa::TrainResult res = sqa::train(mcfg, params, train_set, val_set, to.to_config());

  if (!history_path.empty()) {
    auto out = open_out(history_path);
    sqa::write_history_csv(res.history, out);
  }
  sqa::require(!res.diverged, sqa::Errc::divergence, "training diverged");

  sqa::save_model(out_path, mcfg, stats, params);
  std::cout << "trained on " << train_set.size() << " utterances (val " << val_set.size()
            << "); best epoch " << res.best_epoch << " val_mse " << res.best_val_mse
            << "; saved " << out_path << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& features_dir,
                const std::string& mos_path, const std::string& out_path, bool raw) {
  sqa::ModelCheckpoint ck = sqa::load_model(model_path);

  std::vector<std::string> ids;
  if (!mos_path.empty()) {
    for (const auto& r : sqa::read_mos_csv_file(mos_path)) ids.push_back(r.stimulus_id);
  } else {
    sqa::require(fs::is_directory(features_dir), sqa::Errc::io,
                 "'" + features_dir + "' is not a directory");
    for (const auto& e : fs::directory_iterator(features_dir))
      if (e.path().extension() == ".sqft") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  sqa::require(!ids.empty(), sqa::Errc::empty_input, "no features to predict");

  auto out = open_out(out_path);
  out << "stimulus_id,pred_mos\n";
  char buf[96];
  for (const auto& id : ids) {
    fs::path p = fs::path(features_dir) / (id + ".sqft");
    sqa::require(fs::exists(p), sqa::Errc::io, "missing feature file '" + p.string() + "'");
    sqa::Spectrogram spec = sqa::load_features(p.string());
    sqa::require(spec.bins == ck.stats.mean.size(), sqa::Errc::dimension,
                 "feature dimension does not match model");
    spec = sqa::normalize(spec, ck.stats);
    Eigen::MatrixXd X = sqa::to_input_matrix(spec);
    double pred;
    if (raw) {
      sqa::ForwardTrace trace;
      pred = sqa::model_forward(ck.config, ck.params, X, trace);
    } else {
      pred = sqa::predict_mos(ck.config, ck.params, X);
    }
    std::snprintf(buf, sizeof(buf), "%s,%.6f", id.c_str(), pred);
    out << buf << '\n';
  }
  std::cout << "wrote " << ids.size() << " predictions to " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& preds_path, const std::string& mos_path,
                 const std::string& out_path, const std::string& jsonl_path, bool map,
                 const std::string& name) {
  auto preds_rows = read_predictions(preds_path);
  auto mos_rows = sqa::read_mos_csv_file(mos_path);

  std::map<std::string, double> pred_by_id;
  for (const auto& [id, v] : preds_rows) {
    sqa::require(pred_by_id.emplace(id, v).second, sqa::Errc::duplicate,
                 "duplicate prediction for '" + id + "'");
  }
  std::vector<double> preds, targets, ci95;
  for (const auto& r : mos_rows) {
    auto it = pred_by_id.find(r.stimulus_id);
    if (it == pred_by_id.end()) continue;
    preds.push_back(it->second);
    targets.push_back(r.mos);
    ci95.push_back(r.ci95);
  }
  sqa::require(!preds.empty(), sqa::Errc::empty_input,
               "no stimuli common to predictions and MOS table");

  int dof = 0;
  if (map) {
    sqa::Poly3Map poly = sqa::fit_poly3_map(preds, targets);
    preds = sqa::apply_map(poly, preds);
    dof = 4;
    if (!poly.monotone_increasing)
      std::cout << "note: fitted mapping is not monotone over the prediction range\n";
  }
  sqa::EvalReport report = sqa::evaluate(preds, targets, ci95, dof);

  std::vector<std::pair<std::string, sqa::EvalReport>> rows = {{name, report}};
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    sqa::write_eval_csv(rows, out);
  }
  if (!jsonl_path.empty()) {
    auto out = open_out(jsonl_path);
    sqa::write_eval_jsonl(rows, out);
  }
  sqa::print_eval_table(rows, std::cout);
  return 0;
}

int cmd_crossval(const std::string& features_dir, const std::string& mos_path,
                 const std::string& out_path, int folds, bool skip_missing, const ModelOpts& mo,
                 const TrainOpts& to, const SplitOpts& so, const std::string& dump_cfg) {
  auto rows = sqa::read_mos_csv_file(mos_path);
  Dataset ds = load_dataset(features_dir, rows, skip_missing);
  rows = rows_with_features(rows, ds);

  dump_config_file(dump_cfg, "crossval",
                   json{{"features-dir", features_dir},
                        {"mos", mos_path},
                        {"folds", folds},
                        {"model", mo.to_json()},
                        {"train", to.to_json()},
                        {"split", so.to_json()}});

  auto plans = sqa::make_splits(rows, so.to_config(folds));
  std::vector<sqa::FoldResult> results;
  std::vector<std::pair<std::string, sqa::EvalReport>> table;
  for (std::size_t k = 0; k < plans.size(); ++k) {
    ModelOpts fold_mo = mo;
    fold_mo.model_seed = sqa::derive_seed(mo.model_seed, k);
    sqa::ModelConfig mcfg = fold_mo.to_config(static_cast<int>(ds.bins));
    FoldOutcome outcome = run_fold(ds, plans[k], mcfg, to.to_config());
    results.push_back(outcome.result);
    table.emplace_back("fold_" + std::to_string(k), outcome.result.report);
    std::cout << "fold " << k << ": test n=" << outcome.result.preds.size() << " best epoch "
              << outcome.training.best_epoch << "\n";
  }
  sqa::CrossValReport agg = sqa::aggregate_folds(results);
  table.emplace_back("pooled", agg.pooled);
  table.emplace_back("averaged", agg.averaged);

  if (!out_path.empty()) {
    auto out = open_out(out_path);
    sqa::write_eval_csv(table, out);
  }
  sqa::print_eval_table(table, std::cout);
  return 0;
}

int cmd_ablate(const std::string& features_dir, const std::string& mos_path,
               const std::string& out_path, const std::string& pairs_path, bool skip_missing,
               const ModelOpts& mo, const TrainOpts& to, const SplitOpts& so,
               const std::string& dump_cfg) {
  auto rows = sqa::read_mos_csv_file(mos_path);
  Dataset ds = load_dataset(features_dir, rows, skip_missing);
  rows = rows_with_features(rows, ds);

  dump_config_file(dump_cfg, "ablate",
                   json{{"features-dir", features_dir},
                        {"mos", mos_path},
                        {"model", mo.to_json()},
                        {"train", to.to_json()},
                        {"split", so.to_json()}});

  int folds = static_cast<int>(std::llround(1.0 / so.test_frac));
  sqa::SplitPlan plan = sqa::make_single_split(rows, so.to_config(std::max(folds, 1)));

  struct Variant {
    const char* name;
    bool pyramid, attention;
  };
  const Variant variants[] = {{"blstm", false, false},
                              {"pblstm", true, false},
                              {"blstm_attn", false, true},
                              {"pblstm_attn", true, true}};

  std::map<std::string, sqa::FoldResult> results;
  std::vector<std::pair<std::string, sqa::EvalReport>> table;
  for (const auto& v : variants) {
    ModelOpts vo = mo;
    vo.no_pyramid = !v.pyramid;
    vo.no_attention = !v.attention;
    sqa::ModelConfig mcfg = vo.to_config(static_cast<int>(ds.bins));
    FoldOutcome outcome = run_fold(ds, plan, mcfg, to.to_config());
    results[v.name] = outcome.result;
    table.emplace_back(v.name, outcome.result.report);
    std::cout << v.name << ": test n=" << outcome.result.preds.size() << " best epoch "
              << outcome.training.best_epoch << "\n";
  }

  if (!out_path.empty()) {
    auto out = open_out(out_path);
    sqa::write_eval_csv(table, out);
  }
  sqa::print_eval_table(table, std::cout);

  auto sq_losses = [](const sqa::FoldResult& r) {
    std::vector<double> l(r.preds.size());
    for (std::size_t i = 0; i < l.size(); ++i) {
      double d = r.preds[i] - r.targets[i];
      l[i] = d * d;
    }
    return l;
  };
  const std::pair<const char*, const char*> pairs[] = {{"pblstm_attn", "blstm_attn"},
                                                       {"pblstm_attn", "pblstm"},
                                                       {"blstm_attn", "blstm"},
                                                       {"pblstm", "blstm"}};
  std::ofstream pairs_out;
  if (!pairs_path.empty()) {
    pairs_out = open_out(pairs_path);
    pairs_out << "pair,mae_a,mae_b,t_stat,t_p,wilcoxon_w,wilcoxon_p\n";
  }
  char buf[256];
  for (const auto& [a, b] : pairs) {
    sqa::SignificanceResult sig = sqa::significance_test(sq_losses(results[a]), sq_losses(results[b]));
    std::snprintf(buf, sizeof(buf), "%s_vs_%s: mae %.3f vs %.3f, t_p=%.4f wilcoxon_p=%.4f", a, b,
                  results[a].report.mae, results[b].report.mae, sig.t_p, sig.wilcoxon_p);
    std::cout << buf << '\n';
    if (!pairs_path.empty()) {
      std::snprintf(buf, sizeof(buf), "%s_vs_%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", a, b,
                    results[a].report.mae, results[b].report.mae, sig.t_stat, sig.t_p,
                    sig.wilcoxon_w, sig.wilcoxon_p);
      pairs_out << buf << '\n';
    }
  }
  return 0;
}

// Expands --config FILE (a flat JSON object of long-option values) into
// command-line arguments. Keys also given explicitly on the command line are
// skipped, so explicit flags win. Booleans must be true-valued flag names;
// arrays join with commas.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string cfg_path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      sqa::require(i + 1 < args.size(), sqa::Errc::config, "--config needs a file argument");
      cfg_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      cfg_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (cfg_path.empty()) return rest;
  sqa::require(rest.size() >= 2, sqa::Errc::config, "--config requires a subcommand");

  std::ifstream in(cfg_path);
  sqa::require(in.good(), sqa::Errc::io, "cannot open '" + cfg_path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    sqa::fail(sqa::Errc::parse, std::string("bad config JSON: ") + e.what());
  }
  sqa::require(j.is_object(), sqa::Errc::config, "config must be a JSON object");

  std::set<std::string> explicit_opts;
  for (std::size_t i = 2; i < rest.size(); ++i) {
    if (rest[i].rfind("--", 0) != 0) continue;
    explicit_opts.insert(rest[i].substr(2, rest[i].find('=') - 2));
  }

  std::vector<std::string> injected;
  for (const auto& [key, value] : j.items()) {
    if (explicit_opts.count(key)) continue;
    if (value.is_boolean()) {
      sqa::require(value.get<bool>(), sqa::Errc::config,
                   "config key '" + key + "': boolean flags must be true (omit to disable)");
      injected.push_back("--" + key);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ",";
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      injected.push_back("--" + key + "=" + joined);
    } else if (value.is_string()) {
      injected.push_back("--" + key + "=" + value.get<std::string>());
    } else {
      injected.push_back("--" + key + "=" + value.dump());
    }
  }

  std::vector<std::string> out;
  out.push_back(rest[0]);
  out.push_back(rest[1]);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), rest.begin() + 2, rest.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);

  CLI::App app{"non-intrusive speech quality assessment toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sqa 1.0.0");
  app.get_formatter()->column_width(34);

  int exit_code = 0;
  auto run = [&exit_code](auto&& fn) {
    exit_code = fn();
  };

  // features
  auto* feat = app.add_subcommand("features", "Extract log-magnitude spectrogram features");
  struct {
    std::vector<std::string> inputs;
    std::string in_dir, out_dir, stats_out, normalize_with, dump_cfg;
    double frame_ms = 0, hop_ms = 0;
    std::size_t fft_len = 0;
    bool strict = false;
  } fo;
  feat->add_option("--in", fo.inputs, "Input WAV files");
  feat->add_option("--in-dir", fo.in_dir, "Directory of WAV files");
  feat->add_option("--out-dir", fo.out_dir, "Output directory for .sqft files")->required();
  feat->add_option("--stats-out", fo.stats_out, "Write pooled per-bin stats (.sqst)");
  feat->add_option("--normalize-with", fo.normalize_with, "Normalize with an existing stats file");
  feat->add_option("--frame-ms", fo.frame_ms, "Frame length in ms (default 40)");
  feat->add_option("--hop-ms", fo.hop_ms, "Hop in ms (default 30)");
  feat->add_option("--fft-len", fo.fft_len, "FFT length, power of two (default 1024)");
  feat->add_flag("--strict-profile", fo.strict, "32 ms frames with a 512-point FFT");
  feat->add_option("--dump-config", fo.dump_cfg, "Write resolved options as JSON");
  feat->callback([&] {
    run([&] {
      return cmd_features(fo.inputs, fo.in_dir, fo.out_dir, fo.stats_out, fo.normalize_with,
                          fo.frame_ms, fo.hop_ms, fo.fft_len, fo.strict, fo.dump_cfg);
    });
  });

  // clean
  auto* clean = app.add_subcommand("clean", "Clean crowdsourced ratings into per-stimulus MOS");
  struct {
    std::string ratings, out, rejections, audit, profile = "practical", dump_cfg;
    double z_threshold = 0, max_unanswered = -1, eps = 0, if_threshold = 0;
    int min_pts = 0, trees = 0;
    std::uint64_t seed = 20220915;
  } co;
  clean->add_option("--ratings", co.ratings, "Input ratings CSV")->required();
  clean->add_option("--out", co.out, "Output MOS CSV")->required();
  clean->add_option("--rejections", co.rejections, "Worker rejection report (JSONL)");
  clean->add_option("--audit", co.audit, "Per-record removal audit (JSONL)");
  clean->add_option("--profile", co.profile, "Cleaning profile: practical or fidelity");
  clean->add_option("--z-threshold", co.z_threshold, "Z-score removal threshold (default 2.5)");
  clean->add_option("--max-unanswered", co.max_unanswered,
                    "Max unanswered fraction per HIT (default 0.2)");
  clean->add_option("--eps", co.eps, "DBSCAN eps override");
  clean->add_option("--min-pts", co.min_pts, "DBSCAN min_pts override");
  clean->add_option("--trees", co.trees, "Isolation forest tree count (default 100)");
  clean->add_option("--if-threshold", co.if_threshold,
                    "Isolation forest score threshold (default 0.6)");
  clean->add_option("--seed", co.seed, "Ensemble seed");
  clean->add_option("--dump-config", co.dump_cfg, "Write resolved options as JSON");
  clean->callback([&] {
    run([&] {
      return cmd_clean(co.ratings, co.out, co.rejections, co.audit, co.profile, co.z_threshold,
                       co.max_unanswered, co.eps, co.min_pts, co.trees, co.if_threshold, co.seed,
                       co.dump_cfg);
    });
  });

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a rating study and synthetic audio");
  struct {
    int n_stimuli = 0;
    std::string out_ratings, out_truth, out_spammers, audio_dir, dump_cfg;
    sqa::StudyConfig study;
    sqa::SynthAudioConfig synth;
    std::uint64_t seed = 0;
  } so_;
  sim->add_option("--n-stimuli", so_.n_stimuli, "Number of test stimuli")->required();
  sim->add_option("--out-ratings", so_.out_ratings, "Output ratings CSV")->required();
  sim->add_option("--out-truth", so_.out_truth, "True MOS per test stimulus (CSV)");
  sim->add_option("--out-spammers", so_.out_spammers, "Spammer worker ids, one per line");
  sim->add_option("--audio-dir", so_.audio_dir, "Also synthesize WAV clips into this directory");
  sim->add_option("--raters", so_.study.raters_per_hit, "Raters per HIT (default 5)");
  sim->add_option("--trials-per-hit", so_.study.trials_per_hit, "Trials per HIT (default 15)");
  sim->add_option("--test-mos-lo", so_.study.test_mos_lo, "Test stimulus true MOS lower bound");
  sim->add_option("--test-mos-hi", so_.study.test_mos_hi, "Test stimulus true MOS upper bound");
  sim->add_option("--spammer-frac", so_.study.spammer_frac, "Spammer fraction (default 0.1)");
  sim->add_option("--unanswered-prob", so_.study.unanswered_prob,
                  "Per-record unanswered probability");
  sim->add_option("--noise-std", so_.study.rater_noise_std, "Honest rater noise (raw scale)");
  sim->add_option("--bias-std", so_.study.rater_bias_std, "Honest rater bias stdev (raw scale)");
  sim->add_option("--duration-lo", so_.synth.duration_lo_s, "Min clip duration (s)");
  sim->add_option("--duration-hi", so_.synth.duration_hi_s, "Max clip duration (s)");
  sim->add_option("--snr-lo", so_.synth.snr_db_lo, "SNR at quality 0 (dB)");
  sim->add_option("--snr-hi", so_.synth.snr_db_hi, "SNR at quality 10 (dB)");
  auto* seed_opt = sim->add_option("--seed", so_.seed, "Master seed for study and audio");
  sim->add_option("--dump-config", so_.dump_cfg, "Write resolved options as JSON");
  sim->callback([&] {
    run([&] {
      return cmd_simulate(so_.n_stimuli, so_.out_ratings, so_.out_truth, so_.out_spammers,
                          so_.audio_dir, so_.study, so_.synth, so_.seed, seed_opt->count() > 0,
                          so_.dump_cfg);
    });
  });

  // train
  auto* tr = app.add_subcommand("train", "Train a quality model");
  struct {
    std::string features_dir, mos, out, history, dump_cfg;
    bool no_split = false, skip_missing = false;
    ModelOpts mo;
    TrainOpts to;
    SplitOpts so;
  } t;
  tr->add_option("--features-dir", t.features_dir, "Directory of .sqft files")->required();
  tr->add_option("--mos", t.mos, "MOS label CSV")->required();
  tr->add_option("--out", t.out, "Output checkpoint (.sqmd)")->required();
  tr->add_option("--history", t.history, "Per-epoch loss CSV");
  tr->add_flag("--no-split", t.no_split, "Train on every stimulus (no val/test holdout)");
  tr->add_flag("--skip-missing-features", t.skip_missing,
               "Ignore MOS rows without a feature file");
  add_model_opts(tr, t.mo);
  add_train_opts(tr, t.to);
  add_split_opts(tr, t.so);
  tr->add_option("--dump-config", t.dump_cfg, "Write resolved options as JSON");
  tr->callback([&] {
    run([&] {
      return cmd_train(t.features_dir, t.mos, t.out, t.history, t.no_split, t.skip_missing, t.mo,
                       t.to, t.so, t.dump_cfg);
    });
  });

  // predict
  auto* pr = app.add_subcommand("predict", "Predict MOS for feature files");
  struct {
    std::string model, features_dir, mos, out;
    bool raw = false;
  } p;
  pr->add_option("--model", p.model, "Model checkpoint (.sqmd)")->required();
  pr->add_option("--features-dir", p.features_dir, "Directory of .sqft files")->required();
  pr->add_option("--mos", p.mos, "Restrict to stimuli in this MOS CSV");
  pr->add_option("--out", p.out, "Output predictions CSV")->required();
  pr->add_flag("--raw", p.raw, "Emit unclamped scores");
  pr->callback([&] {
    run([&] { return cmd_predict(p.model, p.features_dir, p.mos, p.out, p.raw); });
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score predictions against a MOS table");
  struct {
    std::string preds, mos, out, jsonl, name = "model";
    bool map = false;
  } e;
  ev->add_option("--preds", e.preds, "Predictions CSV")->required();
  ev->add_option("--mos", e.mos, "MOS label CSV")->required();
  ev->add_option("--out", e.out, "Metrics CSV");
  ev->add_option("--jsonl", e.jsonl, "Metrics JSONL");
  ev->add_flag("--map", e.map, "Fit and apply a third-order mapping first (d=4)");
  ev->add_option("--name", e.name, "Row label");
  ev->callback([&] {
    run([&] { return cmd_evaluate(e.preds, e.mos, e.out, e.jsonl, e.map, e.name); });
  });

  // crossval
  auto* cv = app.add_subcommand("crossval", "K-fold cross-validation");
  struct {
    std::string features_dir, mos, out, dump_cfg;
    int folds = 5;
    bool skip_missing = false;
    ModelOpts mo;
    TrainOpts to;
    SplitOpts so;
  } c;
  cv->add_option("--features-dir", c.features_dir, "Directory of .sqft files")->required();
  cv->add_option("--mos", c.mos, "MOS label CSV")->required();
  cv->add_option("--out", c.out, "Per-fold metrics CSV");
  cv->add_option("--folds", c.folds, "Fold count (default 5)");
  cv->add_flag("--skip-missing-features", c.skip_missing,
               "Ignore MOS rows without a feature file");
  add_model_opts(cv, c.mo);
  add_train_opts(cv, c.to);
  add_split_opts(cv, c.so);
  cv->add_option("--dump-config", c.dump_cfg, "Write resolved options as JSON");
  cv->callback([&] {
    run([&] {
      return cmd_crossval(c.features_dir, c.mos, c.out, c.folds, c.skip_missing, c.mo, c.to, c.so,
                          c.dump_cfg);
    });
  });

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and compare the four architecture variants");
  struct {
    std::string features_dir, mos, out, pairs, dump_cfg;
    bool skip_missing = false;
    ModelOpts mo;
    TrainOpts to;
    SplitOpts so;
  } a;
  ab->add_option("--features-dir", a.features_dir, "Directory of .sqft files")->required();
  ab->add_option("--mos", a.mos, "MOS label CSV")->required();
  ab->add_option("--out", a.out, "Variant metrics CSV");
  ab->add_option("--pairs", a.pairs, "Pairwise significance CSV");
  ab->add_flag("--skip-missing-features", a.skip_missing,
               "Ignore MOS rows without a feature file");
  add_model_opts(ab, a.mo);
  add_train_opts(ab, a.to);
  add_split_opts(ab, a.so);
  ab->add_option("--dump-config", a.dump_cfg, "Write resolved options as JSON");
  ab->callback([&] {
    run([&] {
      return cmd_ablate(a.features_dir, a.mos, a.out, a.pairs, a.skip_missing, a.mo, a.to, a.so,
                       a.dump_cfg);
    });
  });

  try {
    std::vector<std::string> args = expand_config_args(argc, argv);
    std::vector<char*> ptrs;
    ptrs.reserve(args.size());
    for (auto& s : args) ptrs.push_back(s.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : static_cast<int>(sqa::Errc::config);
  } catch (const sqa::Error& err) {
    std::cerr << "error: " << err.what() << " [" << sqa::errc_name(err.code()) << "]\n";
    return err.exit_code();
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return exit_code;
}
