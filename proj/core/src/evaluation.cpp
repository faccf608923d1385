/*
 * Copyright 2026 The lcp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lcp/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/core.h>
#include <json.hpp>

#include "lcp/common.hpp"

namespace lcp {
namespace {

void require_same_length(std::span<const double> a, std::span<const double> b, std::size_t min_len,
                         std::string_view what) {
  if (a.size() != b.size()) {
    throw DataError(fmt::format("{}: length mismatch ({} vs {})", what, a.size(), b.size()));
  }
  if (a.size() < min_len) {
    throw UndefinedMetricError(fmt::format("{}: needs at least {} values, got {}", what, min_len, a.size()));
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double pearson(std::span<const double> pred, std::span<const double> gold) {
  require_same_length(pred, gold, 2, "pearson");
  const double mp = mean(pred);
  const double mg = mean(gold);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mp;
    const double dg = gold[i] - mg;
    sxy += dp * dg;
    sxx += dp * dp;
    syy += dg * dg;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetricError("pearson: zero variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 (0-based) share the mean of ranks i+1..j
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> gold) {
  require_same_length(pred, gold, 2, "spearman");
  const auto rp = fractional_ranks(pred);
  const auto rg = fractional_ranks(gold);
  return pearson(rp, rg);
}

double mae(std::span<const double> pred, std::span<const double> gold) {
  require_same_length(pred, gold, 1, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gold[i]);
  return s / static_cast<double>(pred.size());
}

double mse(std::span<const double> pred, std::span<const double> gold) {
  require_same_length(pred, gold, 1, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - gold[i];
    s += e * e;
  }
  return s / static_cast<double>(pred.size());
}

double r2(std::span<const double> pred, std::span<const double> gold) {
  require_same_length(pred, gold, 1, "r2");
  const double mg = mean(gold);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (gold[i] - pred[i]) * (gold[i] - pred[i]);
    ss_tot += (gold[i] - mg) * (gold[i] - mg);
  }
  if (ss_tot == 0.0) throw UndefinedMetricError("r2: zero variance in gold");
  return 1.0 - ss_res / ss_tot;
}

MetricBlock compute_metrics(std::span<const double> pred, std::span<const double> gold) {
  MetricBlock m;
  m.count = pred.size();
  m.pearson = pearson(pred, gold);
  m.spearman = spearman(pred, gold);
  m.mae = mae(pred, gold);
  m.mse = mse(pred, gold);
  m.r2 = r2(pred, gold);
  return m;
}

MetricBlock compute_metrics_lenient(std::span<const double> pred, std::span<const double> gold) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  auto guarded = [&](auto fn) {
    try {
      return fn(pred, gold);
    } catch (const UndefinedMetricError&) {
      return nan;
    }
  };
  MetricBlock m;
  m.count = pred.size();
  m.pearson = guarded(pearson);
  m.spearman = guarded(spearman);
  m.mae = pred.empty() ? nan : mae(pred, gold);
  m.mse = pred.empty() ? nan : mse(pred, gold);
  m.r2 = guarded(r2);
  return m;
}

// ---------------------------------------------------------------------------

void PredictionSet::add(std::string id, double score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw DataError(fmt::format("prediction for '{}' is {} (must be finite, in [0,1])", id, score));
  }
  if (!index_.emplace(id, ids_.size()).second) throw DataError(fmt::format("duplicate prediction id '{}'", id));
  ids_.push_back(std::move(id));
  scores_.push_back(score);
}

std::optional<double> PredictionSet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return scores_[it->second];
}

double PredictionSet::at(std::string_view id) const {
  auto s = find(id);
  if (!s) throw DataError(fmt::format("no prediction for id '{}'", id));
  return *s;
}

std::string format_predictions(const PredictionSet& preds) {
  std::string out = "id,prediction\n";
  for (std::size_t i = 0; i < preds.size(); ++i) out += fmt::format("{},{}\n", preds.ids()[i], preds.scores()[i]);
  return out;
}

void write_predictions(const PredictionSet& preds, const std::filesystem::path& path) {
  write_file_atomic(path, format_predictions(preds));
}

PredictionSet read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("prediction file '{}' not found or unreadable", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("{}: empty file (missing header)", path.string()));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,prediction") {
    throw DataError(fmt::format("{}: expected header 'id,prediction', found '{}'", path.string(), line));
  }
  PredictionSet preds;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    double v = 0.0;
    bool ok = comma != std::string::npos && comma > 0;
    if (ok) {
      const char* b = line.data() + comma + 1;
      const char* e = line.data() + line.size();
      auto [ptr, ec] = std::from_chars(b, e, v);
      ok = ec == std::errc() && ptr == e;
    }
    if (!ok) throw DataError(fmt::format("{}:{}: expected id,prediction", path.string(), lineno));
    try {
      preds.add(line.substr(0, comma), v);
    } catch (const DataError& err) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, err.what()));
    }
  }
  return preds;
}

EvaluationReport evaluate(const PredictionSet& preds, const Dataset& gold) {
  std::vector<double> p, g;
  std::map<Domain, std::pair<std::vector<double>, std::vector<double>>> by_domain;
  for (const auto& inst : gold.instances) {
    if (!inst.gold) continue;
    const auto s = preds.find(inst.id);
    if (!s) throw DataError(fmt::format("missing prediction for labeled instance '{}'", inst.id));
    p.push_back(*s);
    g.push_back(*inst.gold);
    by_domain[inst.domain].first.push_back(*s);
    by_domain[inst.domain].second.push_back(*inst.gold);
  }
  if (p.empty()) throw DataError("evaluate: gold dataset has no labeled instances");

  EvaluationReport report;
  report.overall = compute_metrics(p, g);
  for (Domain d : kDomains) {
    const auto& [dp, dg] = by_domain[d];
    if (dp.size() < 2) {
      report.per_domain[d] = std::nullopt;
    } else {
      report.per_domain[d] = compute_metrics(dp, dg);
    }
  }
  return report;
}

namespace {

nlohmann::json block_json(const MetricBlock& m) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"count", m.count}, {"pearson", num(m.pearson)}, {"spearman", num(m.spearman)},
          {"mae", num(m.mae)},  {"mse", num(m.mse)},         {"r2", num(m.r2)}};
}

}  // namespace

std::string report_to_json(const EvaluationReport& report) {
  nlohmann::json j = block_json(report.overall);
  nlohmann::json pd = nlohmann::json::object();
  for (const auto& [d, block] : report.per_domain) {
    pd[std::string(to_string(d))] = block ? block_json(*block) : nlohmann::json(nullptr);
  }
  j["per_domain"] = std::move(pd);
  return j.dump(2) + "\n";
}

std::string report_to_tsv_line(const EvaluationReport& report) {
  const auto& m = report.overall;
  return fmt::format("{}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\n", m.count, m.pearson, m.spearman, m.mae, m.mse,
                     m.r2);
}

std::vector<std::size_t> histogram(std::span<const double> values, double bin_width) {
  if (!(bin_width > 0.0 && bin_width <= 1.0)) throw std::invalid_argument("histogram: bin width must be in (0,1]");
  const auto bins = static_cast<std::size_t>(std::ceil(1.0 / bin_width - 1e-9));
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto idx = static_cast<std::size_t>(std::floor(std::clamp(v, 0.0, 1.0) / bin_width + 1e-9));
    counts[std::min(idx, bins - 1)]++;
  }
  return counts;
}

void export_analysis(const PredictionSet& preds, const Dataset& gold, const std::filesystem::path& out_dir,
                     const AnalysisOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError(fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));

  std::string scatter = "id,domain,prediction,gold\n";
  std::vector<double> p, g;
  for (const auto& inst : gold.instances) {
    if (!inst.gold) throw DataError(fmt::format("analysis needs labeled gold; '{}' has no label", inst.id));
    const double s = preds.at(inst.id);
    scatter += fmt::format("{},{},{},{}\n", inst.id, to_string(inst.domain), s, *inst.gold);
    p.push_back(s);
    g.push_back(*inst.gold);
  }
  write_file_atomic(out_dir / "scatter.csv", scatter);

  const auto hp = histogram(p, options.bin_width);
  const auto hg = histogram(g, options.bin_width);
  std::string hist = "bin_lo,bin_hi,prediction_count,gold_count\n";
  for (std::size_t b = 0; b < hp.size(); ++b) {
    const double lo = static_cast<double>(b) * options.bin_width;
    const double hi = std::min(1.0, lo + options.bin_width);
    hist += fmt::format("{:.4f},{:.4f},{},{}\n", lo, hi, hp[b], hg[b]);
  }
  write_file_atomic(out_dir / "histogram.csv", hist);

  // Lenient metrics: a constant-output model still gets its error columns.
  auto row = [](std::string_view name, std::size_t count, const std::vector<double>& pp,
                const std::vector<double>& gg) {
    if (count < 2) return fmt::format("{},{},,,,,\n", name, count);
    const auto m = compute_metrics_lenient(pp, gg);
    auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt::format("{:.4f}", v); };
    return fmt::format("{},{},{},{},{},{},{}\n", name, count, cell(m.mae), cell(m.pearson), cell(m.spearman),
                       cell(m.mse), cell(m.r2));
  };
  std::string table = "domain,count,mae,pearson,spearman,mse,r2\n";
  for (const auto& [d, part] : partition_by_domain(gold)) {
    std::vector<double> dp, dg;
    for (const auto& inst : part.instances) {
      dp.push_back(preds.at(inst.id));
      dg.push_back(*inst.gold);
    }
    table += row(to_string(d), dp.size(), dp, dg);
  }
  table += row("all", p.size(), p, g);
  write_file_atomic(out_dir / "per_domain.csv", table);
}

}  // namespace lcp
