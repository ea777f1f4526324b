#include "slicerec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "slicerec/errors.hpp"

namespace slicerec {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_inputs(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw EvaluationError("scores and labels differ in length");
  if (scores.empty()) throw EvaluationError("no scores to evaluate");
  int pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw EvaluationError("labels must be 0 or 1");
    if (!std::isfinite(scores[i]))
      throw EvaluationError("non-finite score at index " + std::to_string(i));
    (labels[i] ? pos : neg)++;
  }
  if (pos == 0 || neg == 0)
    throw EvaluationError("both classes are required (" + std::to_string(neg) +
                          " negative, " + std::to_string(pos) + " positive)");
}

// (score, label) sorted ascending by score.
std::vector<std::pair<double, int>> sorted_pairs(
    const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<std::pair<double, int>> v;
  v.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    v.emplace_back(scores[i], labels[i]);
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const auto v = sorted_pairs(scores, labels);
  double n_pos = 0, n_neg = 0;
  for (const auto& [s, l] : v) (l ? n_pos : n_neg)++;
  // Mann-Whitney pair counting, ties worth 1/2.
  double won = 0;
  double neg_below = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    double pos_here = 0, neg_here = 0;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? pos_here : neg_here)++;
      ++j;
    }
    won += pos_here * (neg_below + 0.5 * neg_here);
    neg_below += neg_here;
    i = j;
  }
  return won / (n_pos * n_neg);
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  check_inputs(scores, labels);
  auto v = sorted_pairs(scores, labels);
  std::reverse(v.begin(), v.end());  // descending: sweep threshold downward
  double n_pos = 0, n_neg = 0;
  for (const auto& [s, l] : v) (l ? n_pos : n_neg)++;

  std::vector<RocPoint> roc;
  roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    // One vertex per distinct score value; ties move diagonally together.
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? tp : fp)++;
      ++j;
    }
    roc.push_back({fp / n_neg, tp / n_pos, v[i].first});
    i = j;
  }
  return roc;
}

double roc_auc(const std::vector<RocPoint>& roc) {
  if (roc.size() < 2) throw EvaluationError("roc curve has fewer than 2 points");
  double area = 0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return area;
}

EvalReport evaluate_staged(const std::vector<ScoreRecord>& test,
                           const ScoreSelection& selection, int bins) {
  if (bins < 1) throw EvaluationError("histogram needs at least 1 bin");
  if (test.empty()) throw EvaluationError("no test records to evaluate");

  EvalReport rep;
  rep.key = selection.key;
  rep.validation_auc = selection.validation_auc;

  std::vector<double> healthy;
  std::vector<std::pair<Cdr, double>> anomalous;
  for (const ScoreRecord& r : test) {
    const double s = r.score(selection.key.metric, selection.key.agg);
    if (r.cdr == Cdr::zero)
      healthy.push_back(s);
    else
      anomalous.emplace_back(r.cdr, s);
  }
  if (healthy.empty())
    throw EvaluationError("test split has no healthy scans as negatives");
  if (anomalous.empty())
    throw EvaluationError("test split has no anomalous scans");

  auto compare = [&](const std::vector<double>& pos_scores) {
    std::vector<double> scores = healthy;
    std::vector<int> labels(healthy.size(), 0);
    scores.insert(scores.end(), pos_scores.begin(), pos_scores.end());
    labels.insert(labels.end(), pos_scores.size(), 1);
    StageComparison c;
    c.n_negative = static_cast<int>(healthy.size());
    c.n_positive = static_cast<int>(pos_scores.size());
    c.auc = auc(scores, labels);
    c.roc = roc_curve(scores, labels);
    return c;
  };

  std::vector<double> all_pos;
  for (const auto& [c, s] : anomalous) all_pos.push_back(s);
  rep.overall = compare(all_pos);

  for (Cdr stage : {Cdr::half, Cdr::one, Cdr::two}) {
    std::vector<double> pos;
    for (const auto& [c, s] : anomalous)
      if (c == stage) pos.push_back(s);
    if (pos.empty()) {
      rep.warnings.push_back("stage " + cdr_str(stage) +
                             " has no test scans; comparison skipped");
      continue;
    }
    StageComparison c = compare(pos);
    c.stage = stage;
    rep.per_stage.push_back(std::move(c));
  }

  // Shared-edge histogram of the selected score, one row per CDR present.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const ScoreRecord& r : test) {
    const double s = r.score(selection.key.metric, selection.key.agg);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  rep.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i)
    rep.bin_edges[static_cast<std::size_t>(i)] =
        lo + (hi - lo) * i / static_cast<double>(bins);
  for (Cdr c : {Cdr::zero, Cdr::half, Cdr::one, Cdr::two}) {
    HistogramRow row;
    row.cdr = c;
    row.counts.assign(static_cast<std::size_t>(bins), 0);
    for (const ScoreRecord& r : test) {
      if (r.cdr != c) continue;
      const double s = r.score(selection.key.metric, selection.key.agg);
      int b = static_cast<int>((s - lo) / (hi - lo) * bins);
      b = std::clamp(b, 0, bins - 1);  // top edge joins the last bin
      row.counts[static_cast<std::size_t>(b)]++;
      row.n++;
    }
    if (row.n > 0) rep.histogram.push_back(std::move(row));
  }
  return rep;
}

void write_report(const EvalReport& r, std::ostream& out) {
  out << "# staged anomaly evaluation\n";
  out << "selected_score\t" << r.key.str() << '\n';
  out << "validation_auc\t" << fmt_g(r.validation_auc) << '\n';
  out << "comparison\tn_healthy\tn_anomalous\tauc\n";
  out << "overall\t" << r.overall.n_negative << '\t' << r.overall.n_positive
      << '\t' << fmt_g(r.overall.auc) << '\n';
  for (const StageComparison& c : r.per_stage)
    out << "stage_" << cdr_str(c.stage) << '\t' << c.n_negative << '\t'
        << c.n_positive << '\t' << fmt_g(c.auc) << '\n';
  for (const std::string& w : r.warnings) out << "warning\t" << w << '\n';
}

void write_roc_table(const EvalReport& r, std::ostream& out) {
  out << "comparison\tfpr\ttpr\tthreshold\n";
  auto rows = [&](const std::string& name, const StageComparison& c) {
    for (const RocPoint& p : c.roc)
      out << name << '\t' << fmt_g(p.fpr) << '\t' << fmt_g(p.tpr) << '\t'
          << fmt_g(p.threshold) << '\n';
  };
  rows("overall", r.overall);
  for (const StageComparison& c : r.per_stage)
    rows("stage_" + cdr_str(c.stage), c);
}

void write_histogram_table(const EvalReport& r, std::ostream& out) {
  out << "cdr\tbin_lo\tbin_hi\tcount\n";
  for (const HistogramRow& row : r.histogram)
    for (std::size_t b = 0; b + 1 < r.bin_edges.size(); ++b)
      out << cdr_str(row.cdr) << '\t' << fmt_g(r.bin_edges[b]) << '\t'
          << fmt_g(r.bin_edges[b + 1]) << '\t' << row.counts[b] << '\n';
}

}  // namespace slicerec
