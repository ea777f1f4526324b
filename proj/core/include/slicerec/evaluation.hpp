#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "slicerec/scoring.hpp"

namespace slicerec {

// labels are 0 (negative) / 1 (positive); larger score = more positive.

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  double threshold = 0;  // +inf for the (0,0) vertex
};

// Vertices from (0,0) to (1,1), one step per distinct score value.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<int>& labels);

// Exact Mann-Whitney pair counting; ties count 1/2.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Trapezoidal area under a roc_curve result (equals auc()).
double roc_auc(const std::vector<RocPoint>& roc);

// One healthy-vs-stage comparison.
struct StageComparison {
  Cdr stage = Cdr::half;
  int n_negative = 0;
  int n_positive = 0;
  double auc = 0;
  std::vector<RocPoint> roc;
};

struct HistogramRow {
  Cdr cdr = Cdr::zero;
  int n = 0;
  std::vector<int> counts;
};

struct EvalReport {
  ScoreKey key{Metric::l2, Aggregation::average};
  double validation_auc = 0;

  // healthy vs all-anomalous, then healthy vs each stage present.
  StageComparison overall;     // stage field unused here
  std::vector<StageComparison> per_stage;
  std::vector<std::string> warnings;  // e.g. absent stages

  // Shared-edge histogram of the selected score per CDR group.
  std::vector<double> bin_edges;  // bins + 1 edges
  std::vector<HistogramRow> histogram;
};

// Evaluate test records under an already-selected score. Healthy scans
// are the negative class everywhere; each comparison needs both classes
// non-empty or it is skipped with a warning. No healthy scans at all, or
// no anomalous scans at all, is an error.
EvalReport evaluate_staged(const std::vector<ScoreRecord>& test,
                           const ScoreSelection& selection, int bins = 30);

// Deterministic plain-text report (%.17g numbers).
void write_report(const EvalReport& r, std::ostream& out);
// ROC vertices of every comparison as TSV.
void write_roc_table(const EvalReport& r, std::ostream& out);
// Histogram as TSV, one row per (cdr, bin).
void write_histogram_table(const EvalReport& r, std::ostream& out);

}  // namespace slicerec
