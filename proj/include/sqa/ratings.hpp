// sqa/ratings.hpp  --  crowdsourced rating cleaning and MOS aggregation.
//
// Pipeline order is fixed: reject workers -> z-score filter -> per-worker
// min-max rescale -> DBSCAN+IF ensemble -> per-stimulus averaging. Stages
// only remove or rescale records, never invent them.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_RATINGS_HPP_
#define SQA_RATINGS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sqa/common.hpp"
#include "sqa/outliers.hpp"
#include "sqa/stats.hpp"

namespace sqa {

enum class Condition { reference, anchor, test };
enum class Corpus { cosine, voices, synthetic };

inline const char* to_string(Condition c) {
  switch (c) {
    case Condition::reference: return "reference";
    case Condition::anchor: return "anchor";
    case Condition::test: return "test";
  }
  return "?";
}

inline const char* to_string(Corpus c) {
  switch (c) {
    case Corpus::cosine: return "cosine";
    case Corpus::voices: return "voices";
    case Corpus::synthetic: return "synthetic";
  }
  return "?";
}

inline Condition condition_from_string(const std::string& s) {
  if (s == "reference") return Condition::reference;
  if (s == "anchor") return Condition::anchor;
  if (s == "test") return Condition::test;
  fail(Errc::parse, "unknown condition '" + s + "'");
}

inline Corpus corpus_from_string(const std::string& s) {
  if (s == "cosine") return Corpus::cosine;
  if (s == "voices") return Corpus::voices;
  if (s == "synthetic") return Corpus::synthetic;
  fail(Errc::parse, "unknown corpus '" + s + "'");
}

struct RatingRecord {
  std::string worker_id;
  std::string hit_id;
  std::string trial_id;
  std::string stimulus_id;
  Condition condition = Condition::test;
  Corpus corpus = Corpus::synthetic;
  bool answered = false;
  double raw_score = 0.0;     // in [0, 100] when answered
  double scaled_score = 0.0;  // in [0, 10] once rescaled
};

struct DbscanParams {
  double eps = 1.0;
  int min_pts = 3;
};

struct IForestParams {
  int n_trees = 100;
  std::size_t subsample = 256;  // effective size is min(subsample, n)
  double score_threshold = 0.6;
};

enum class CleaningProfile { fidelity, practical };

// "practical" is the default: with only ~5 ratings per stimulus the
// reference-implementation defaults (eps 0.5, min_pts 5) label nearly
// everything noise.
struct CleaningConfig {
  double z_threshold = 2.5;
  double max_unanswered_frac = 0.2;
  DbscanParams dbscan{1.0, 3};
  IForestParams iforest{};
  std::uint64_t seed = 20220915;
  CleaningProfile profile = CleaningProfile::practical;

  static CleaningConfig with_profile(CleaningProfile p) {
    CleaningConfig cfg;
    cfg.profile = p;
    if (p == CleaningProfile::fidelity) cfg.dbscan = DbscanParams{0.5, 5};
    return cfg;
  }
};

inline void validate_cleaning_config(const CleaningConfig& cfg) {
  require(cfg.z_threshold > 0, Errc::config, "z_threshold must be positive");
  require(cfg.max_unanswered_frac >= 0 && cfg.max_unanswered_frac <= 1, Errc::config,
          "max_unanswered_frac must be in [0,1]");
  require(cfg.dbscan.eps > 0, Errc::config, "dbscan eps must be positive");
  require(cfg.dbscan.min_pts >= 1, Errc::config, "dbscan min_pts must be >= 1");
  require(cfg.iforest.n_trees >= 1, Errc::config, "iforest n_trees must be >= 1");
}

struct StimulusMOS {
  std::string stimulus_id;
  Corpus corpus = Corpus::synthetic;
  double mos = 0.0;
  int n_ratings = 0;
  double std = 0.0;
  double ci95 = 0.0;
};

struct WorkerRejection {
  std::string worker_id;
  std::string reason;  // unanswered | constant | random_scoring | degenerate_rescale
  std::string detail;
};

struct AuditEntry {
  std::string stage;  // reject | zscore | rescale | ensemble
  std::string worker_id;
  std::string stimulus_id;
  std::string detail;
};

struct CleaningOutcome {
  std::vector<RatingRecord> surviving;
  std::vector<StimulusMOS> mos;
  std::vector<WorkerRejection> rejections;
  std::vector<AuditEntry> audit;
  std::vector<std::string> empty_stimuli;  // had ratings at ingest, none survived
};

// ---- CSV ingest ----

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

constexpr const char* kRatingsHeader =
    "worker_id,hit_id,trial_id,stimulus_id,condition,corpus,raw_score";

inline std::vector<RatingRecord> ingest_ratings(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::parse, "empty ratings file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kRatingsHeader, Errc::parse,
          std::string("ratings header must be '") + kRatingsHeader + "'");

  std::vector<RatingRecord> records;
  std::map<std::pair<std::string, std::string>, int> seen;
  std::vector<std::string> duplicates;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    require(fields.size() == 7, Errc::parse,
            "line " + std::to_string(line_no) + ": expected 7 fields");
    RatingRecord r;
    r.worker_id = fields[0];
    r.hit_id = fields[1];
    r.trial_id = fields[2];
    r.stimulus_id = fields[3];
    require(!r.worker_id.empty() && !r.stimulus_id.empty(), Errc::parse,
            "line " + std::to_string(line_no) + ": empty worker or stimulus id");
    r.condition = condition_from_string(fields[4]);
    r.corpus = corpus_from_string(fields[5]);
    if (fields[6].empty()) {
      r.answered = false;
    } else {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(fields[6], &used);
      } catch (const std::exception&) {
        fail(Errc::parse, "line " + std::to_string(line_no) + ": bad raw_score");
      }
      require(used == fields[6].size(), Errc::parse,
              "line " + std::to_string(line_no) + ": bad raw_score");
      require(v >= 0.0 && v <= 100.0, Errc::range,
              "line " + std::to_string(line_no) + ": raw_score outside [0,100]");
      r.answered = true;
      r.raw_score = v;
    }
    auto key = std::make_pair(r.worker_id, r.stimulus_id);
    if (++seen[key] == 2) duplicates.push_back(r.worker_id + "/" + r.stimulus_id);
    records.push_back(std::move(r));
  }
  if (!duplicates.empty()) {
    std::string msg = "duplicate (worker, stimulus) pairs:";
    for (const auto& d : duplicates) msg += " " + d;
    fail(Errc::duplicate, msg);
  }
  return records;
}

inline std::vector<RatingRecord> ingest_ratings_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  return ingest_ratings(in);
}

inline void write_ratings_csv(const std::vector<RatingRecord>& records, std::ostream& out) {
  out << kRatingsHeader << '\n';
  char buf[64];
  for (const auto& r : records) {
    out << r.worker_id << ',' << r.hit_id << ',' << r.trial_id << ',' << r.stimulus_id << ','
        << to_string(r.condition) << ',' << to_string(r.corpus) << ',';
    if (r.answered) {
      std::snprintf(buf, sizeof(buf), "%.4f", r.raw_score);
      out << buf;
    }
    out << '\n';
  }
}

// ---- pipeline stages ----

// Drops every record of a worker that (a) left more than max_unanswered_frac
// of any HIT unanswered, (b) gave identical answers everywhere, or (c) rated
// references no better than anchors on average. The constant check runs
// before the random-scoring one so an all-identical worker is reported as
// "constant".
inline std::vector<RatingRecord> reject_workers(const std::vector<RatingRecord>& table,
                                                const CleaningConfig& cfg,
                                                std::vector<WorkerRejection>* rejections,
                                                std::vector<AuditEntry>* audit) {
  require(!table.empty(), Errc::empty_input, "empty rating table");

  struct WorkerInfo {
    std::map<std::string, std::pair<int, int>> per_hit;  // hit -> (unanswered, total)
    std::vector<double> answered;
    std::vector<double> ref_scores;
    std::vector<double> anchor_scores;
  };
  std::map<std::string, WorkerInfo> workers;
  for (const auto& r : table) {
    WorkerInfo& w = workers[r.worker_id];
    auto& hit = w.per_hit[r.hit_id];
    hit.second += 1;
    if (!r.answered) {
      hit.first += 1;
    } else {
      w.answered.push_back(r.raw_score);
      if (r.condition == Condition::reference) w.ref_scores.push_back(r.raw_score);
      if (r.condition == Condition::anchor) w.anchor_scores.push_back(r.raw_score);
    }
  }

  std::map<std::string, std::string> rejected;  // worker -> reason
  for (const auto& [id, w] : workers) {
    std::string reason, detail;
    for (const auto& [hit, counts] : w.per_hit) {
      double frac = static_cast<double>(counts.first) / static_cast<double>(counts.second);
      if (frac > cfg.max_unanswered_frac) {
        reason = "unanswered";
        detail = "hit " + hit + ": " + std::to_string(counts.first) + "/" +
                 std::to_string(counts.second) + " unanswered";
        break;
      }
    }
    if (reason.empty() && !w.answered.empty()) {
      bool constant = true;
      for (double v : w.answered)
        if (v != w.answered.front()) {
          constant = false;
          break;
        }
      if (constant && w.answered.size() >= 2) {
        reason = "constant";
        detail = "all answered ratings equal";
      }
    }
    if (reason.empty() && !w.ref_scores.empty() && !w.anchor_scores.empty()) {
      double mr = mean_of(w.ref_scores), ma = mean_of(w.anchor_scores);
      if (mr <= ma) {
        reason = "random_scoring";
        char b[96];
        std::snprintf(b, sizeof(b), "mean reference %.2f <= mean anchor %.2f", mr, ma);
        detail = b;
      }
    }
    if (!reason.empty()) {
      rejected[id] = reason;
      if (rejections) rejections->push_back({id, reason, detail});
    }
  }

  std::vector<RatingRecord> kept;
  kept.reserve(table.size());
  for (const auto& r : table) {
    auto it = rejected.find(r.worker_id);
    if (it == rejected.end()) {
      kept.push_back(r);
    } else if (audit) {
      audit->push_back({"reject", r.worker_id, r.stimulus_id, it->second});
    }
  }
  return kept;
}

// Drops answered ratings whose |z| within their (stimulus, condition) group
// exceeds the threshold, and all unanswered records. Groups smaller than 3
// or with zero spread pass through; z uses the population deviation.
inline std::vector<RatingRecord> zscore_filter(const std::vector<RatingRecord>& table,
                                               double z_threshold,
                                               std::vector<AuditEntry>* audit) {
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  for (const auto& r : table)
    if (r.answered)
      groups[{r.stimulus_id, static_cast<int>(r.condition)}].push_back(r.raw_score);

  std::map<std::pair<std::string, int>, std::pair<double, double>> moments;  // mean, std
  for (const auto& [key, vals] : groups) {
    if (vals.size() < 3) continue;
    double m = mean_of(vals);
    double sd = std::sqrt(population_variance(vals));
    if (sd > 0.0) moments[key] = {m, sd};
  }

  std::vector<RatingRecord> kept;
  kept.reserve(table.size());
  for (const auto& r : table) {
    if (!r.answered) {
      if (audit) audit->push_back({"zscore", r.worker_id, r.stimulus_id, "unanswered"});
      continue;
    }
    auto it = moments.find({r.stimulus_id, static_cast<int>(r.condition)});
    if (it != moments.end()) {
      double z = (r.raw_score - it->second.first) / it->second.second;
      if (std::abs(z) > z_threshold) {
        if (audit) {
          char b[48];
          std::snprintf(b, sizeof(b), "|z|=%.3f", std::abs(z));
          audit->push_back({"zscore", r.worker_id, r.stimulus_id, b});
        }
        continue;
      }
    }
    kept.push_back(r);
  }
  return kept;
}

// Per-worker min-max rescale onto [0, 10] over the worker's surviving
// ratings. Workers whose surviving ratings have no spread are dropped.
inline std::vector<RatingRecord> rescale_workers(const std::vector<RatingRecord>& table,
                                                 std::vector<WorkerRejection>* rejections,
                                                 std::vector<AuditEntry>* audit) {
  std::map<std::string, std::pair<double, double>> ranges;  // worker -> (min, max)
  for (const auto& r : table) {
    auto it = ranges.find(r.worker_id);
    if (it == ranges.end()) {
      ranges.emplace(r.worker_id, std::make_pair(r.raw_score, r.raw_score));
    } else {
      it->second.first = std::min(it->second.first, r.raw_score);
      it->second.second = std::max(it->second.second, r.raw_score);
    }
  }

  std::set<std::string> degenerate;
  for (const auto& [id, range] : ranges) {
    if (range.second <= range.first) {
      degenerate.insert(id);
      if (rejections) rejections->push_back({id, "degenerate_rescale", "max == min after filtering"});
    }
  }

  std::vector<RatingRecord> kept;
  kept.reserve(table.size());
  for (const auto& r : table) {
    if (degenerate.count(r.worker_id)) {
      if (audit) audit->push_back({"rescale", r.worker_id, r.stimulus_id, "degenerate range"});
      continue;
    }
    const auto& range = ranges.at(r.worker_id);
    RatingRecord s = r;
    s.scaled_score = 10.0 * (r.raw_score - range.first) / (range.second - range.first);
    kept.push_back(s);
  }
  return kept;
}

// Conjunction rule: a rating is discarded iff DBSCAN labels it noise AND its
// isolation-forest score reaches the threshold, per stimulus.
inline std::vector<RatingRecord> ensemble_outlier_removal(const std::vector<RatingRecord>& table,
                                                          const CleaningConfig& cfg,
                                                          std::vector<AuditEntry>* audit) {
  std::map<std::string, std::vector<std::size_t>> groups;  // stimulus -> record indices
  for (std::size_t i = 0; i < table.size(); ++i) groups[table[i].stimulus_id].push_back(i);

  std::vector<bool> removed(table.size(), false);
  for (const auto& [stimulus, idx] : groups) {
    if (idx.size() < 2) continue;
    std::vector<double> pts(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) pts[k] = table[idx[k]].scaled_score;
    std::vector<int> labels = dbscan_1d(pts, cfg.dbscan.eps, cfg.dbscan.min_pts);
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : stimulus) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    std::vector<double> scores =
        isolation_forest_1d(pts, cfg.iforest.n_trees, std::min(cfg.iforest.subsample, pts.size()),
                            derive_seed(cfg.seed, h));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (labels[k] == kDbscanNoise && scores[k] >= cfg.iforest.score_threshold) {
        removed[idx[k]] = true;
        if (audit) {
          char b[64];
          std::snprintf(b, sizeof(b), "dbscan=noise if=%.3f", scores[k]);
          audit->push_back({"ensemble", table[idx[k]].worker_id, stimulus, b});
        }
      }
    }
  }

  std::vector<RatingRecord> kept;
  kept.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i)
    if (!removed[i]) kept.push_back(table[i]);
  return kept;
}

// Mean of the surviving scaled ratings per stimulus, with sample deviation
// and the t-based 95% half-width.
inline std::vector<StimulusMOS> compute_mos(const std::vector<RatingRecord>& table) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < table.size(); ++i) groups[table[i].stimulus_id].push_back(i);

  std::vector<StimulusMOS> out;
  out.reserve(groups.size());
  for (const auto& [stimulus, idx] : groups) {
    std::vector<double> vals(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) vals[k] = table[idx[k]].scaled_score;
    StimulusMOS m;
    m.stimulus_id = stimulus;
    m.corpus = table[idx.front()].corpus;
    m.mos = mean_of(vals);
    m.n_ratings = static_cast<int>(vals.size());
    m.std = sample_stddev(vals);
    m.ci95 = ci95_halfwidth(m.std, vals.size());
    out.push_back(std::move(m));
  }
  return out;
}

// Full cleaning chain.
inline CleaningOutcome clean_ratings(const std::vector<RatingRecord>& table,
                                     const CleaningConfig& cfg) {
  validate_cleaning_config(cfg);
  CleaningOutcome out;

  std::set<std::string> stimuli_at_ingest;
  for (const auto& r : table) stimuli_at_ingest.insert(r.stimulus_id);

  auto stage1 = reject_workers(table, cfg, &out.rejections, &out.audit);
  auto stage2 = zscore_filter(stage1, cfg.z_threshold, &out.audit);
  auto stage3 = rescale_workers(stage2, &out.rejections, &out.audit);
  out.surviving = ensemble_outlier_removal(stage3, cfg, &out.audit);
  out.mos = compute_mos(out.surviving);

  std::set<std::string> survived;
  for (const auto& m : out.mos) survived.insert(m.stimulus_id);
  for (const auto& s : stimuli_at_ingest)
    if (!survived.count(s)) out.empty_stimuli.push_back(s);
  return out;
}

// ---- MOS table and report serialization ----

inline void write_mos_csv(const std::vector<StimulusMOS>& rows, std::ostream& out) {
  out << "stimulus_id,corpus,mos,n_ratings,std,ci95\n";
  char buf[160];
  for (const auto& m : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%d,%.6f,%.6f", m.stimulus_id.c_str(),
                  to_string(m.corpus), m.mos, m.n_ratings, m.std, m.ci95);
    out << buf << '\n';
  }
}

inline std::vector<StimulusMOS> read_mos_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::parse, "empty MOS file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "stimulus_id,corpus,mos,n_ratings,std,ci95", Errc::parse, "bad MOS header");
  std::vector<StimulusMOS> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    require(f.size() == 6, Errc::parse, "MOS line " + std::to_string(line_no) + ": expected 6 fields");
    StimulusMOS m;
    m.stimulus_id = f[0];
    m.corpus = corpus_from_string(f[1]);
    try {
      m.mos = std::stod(f[2]);
      m.n_ratings = std::stoi(f[3]);
      m.std = std::stod(f[4]);
      m.ci95 = std::stod(f[5]);
    } catch (const std::exception&) {
      fail(Errc::parse, "MOS line " + std::to_string(line_no) + ": bad numeric field");
    }
    require(m.mos >= 0.0 && m.mos <= 10.0, Errc::range,
            "MOS line " + std::to_string(line_no) + ": mos outside [0,10]");
    rows.push_back(std::move(m));
  }
  return rows;
}

inline std::vector<StimulusMOS> read_mos_csv_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  return read_mos_csv(in);
}

namespace detail {

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out.push_back('\\');
      out.push_back(c);
    } else if (static_cast<unsigned char>(c) < 0x20) {
      char b[8];
      std::snprintf(b, sizeof(b), "\\u%04x", c);
      out += b;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

// One JSON object per line, for audit tooling.
inline void write_rejections_jsonl(const std::vector<WorkerRejection>& rows, std::ostream& out) {
  for (const auto& r : rows)
    out << "{\"worker_id\":\"" << detail::json_escape(r.worker_id) << "\",\"reason\":\""
        << detail::json_escape(r.reason) << "\",\"detail\":\"" << detail::json_escape(r.detail)
        << "\"}\n";
}

inline void write_audit_jsonl(const std::vector<AuditEntry>& rows, std::ostream& out) {
  for (const auto& a : rows)
    out << "{\"stage\":\"" << a.stage << "\",\"worker_id\":\"" << detail::json_escape(a.worker_id)
        << "\",\"stimulus_id\":\"" << detail::json_escape(a.stimulus_id) << "\",\"detail\":\""
        << detail::json_escape(a.detail) << "\"}\n";
}

}  // namespace sqa

#endif  // SQA_RATINGS_HPP_
