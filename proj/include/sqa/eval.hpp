// sqa/eval.hpp  --  evaluation reports and cross-validation aggregation.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SQA_EVAL_HPP_
#define SQA_EVAL_HPP_

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sqa/common.hpp"
#include "sqa/metrics.hpp"

namespace sqa {

struct EvalReport {
  std::size_t n = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double rmse_star = 0.0;
  double pcc = 0.0;
  double srcc = 0.0;
};

// Full metric set on one prediction/label pairing. `ci95` are the label
// confidence half-widths (pass zeros when unknown) and `map_dof` the degrees
// of freedom absorbed by any mapping applied to the predictions beforehand.
inline EvalReport evaluate(const std::vector<double>& preds, const std::vector<double>& targets,
                           const std::vector<double>& ci95, int map_dof = 0) {
  EvalReport r;
  r.n = preds.size();
  r.mae = mae(preds, targets);
  r.rmse = rmse(preds, targets);
  r.rmse_star = rmse_star(preds, targets, ci95, map_dof);
  r.pcc = pcc(preds, targets);
  r.srcc = srcc(preds, targets);
  return r;
}

inline EvalReport evaluate(const std::vector<double>& preds,
                           const std::vector<double>& targets) {
  return evaluate(preds, targets, std::vector<double>(preds.size(), 0.0), 0);
}

struct FoldResult {
  std::vector<double> preds;
  std::vector<double> targets;
  std::vector<double> ci95;
  EvalReport report;
};

struct CrossValReport {
  std::vector<EvalReport> folds;
  EvalReport pooled;   // metrics over all folds' predictions concatenated
  EvalReport averaged; // plain mean of per-fold metrics
};

inline CrossValReport aggregate_folds(const std::vector<FoldResult>& folds) {
  require(!folds.empty(), Errc::empty_input, "no folds to aggregate");
  CrossValReport out;
  std::vector<double> preds, targets, ci95;
  for (const auto& f : folds) {
    out.folds.push_back(f.report);
    preds.insert(preds.end(), f.preds.begin(), f.preds.end());
    targets.insert(targets.end(), f.targets.begin(), f.targets.end());
    ci95.insert(ci95.end(), f.ci95.begin(), f.ci95.end());
  }
  out.pooled = evaluate(preds, targets, ci95, 0);
  const double k = static_cast<double>(folds.size());
  out.averaged.n = preds.size();
  for (const auto& r : out.folds) {
    out.averaged.mae += r.mae / k;
    out.averaged.rmse += r.rmse / k;
    out.averaged.rmse_star += r.rmse_star / k;
    out.averaged.pcc += r.pcc / k;
    out.averaged.srcc += r.srcc / k;
  }
  return out;
}

inline void write_eval_csv(const std::vector<std::pair<std::string, EvalReport>>& rows,
                           std::ostream& out) {
  out << "model,n,mae,rmse,rmse_star,pcc,srcc\n";
  char buf[192];
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f", name.c_str(), r.n, r.mae,
                  r.rmse, r.rmse_star, r.pcc, r.srcc);
    out << buf << '\n';
  }
}

inline void write_eval_jsonl(const std::vector<std::pair<std::string, EvalReport>>& rows,
                             std::ostream& out) {
  char buf[256];
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf),
                  "{\"model\":\"%s\",\"n\":%zu,\"mae\":%.6f,\"rmse\":%.6f,"
                  "\"rmse_star\":%.6f,\"pcc\":%.6f,\"srcc\":%.6f}",
                  name.c_str(), r.n, r.mae, r.rmse, r.rmse_star, r.pcc, r.srcc);
    out << buf << '\n';
  }
}

// Fixed-width comparison table in the style of the usual results listings.
inline void print_eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows,
                             std::ostream& out) {
  std::size_t w = 14;
  for (const auto& [name, r] : rows) w = std::max(w, name.size() + 2);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %7s %7s %7s %7s %7s", static_cast<int>(w), "model",
                "MAE", "RMSE", "RMSE*", "PCC", "SRCC");
  out << buf << '\n';
  out << std::string(w + 5 * 8, '-') << '\n';
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s %7.2f %7.2f %7.2f %7.2f %7.2f", static_cast<int>(w),
                  name.c_str(), r.mae, r.rmse, r.rmse_star, r.pcc, r.srcc);
    out << buf << '\n';
  }
}

}  // namespace sqa

#endif  // SQA_EVAL_HPP_
