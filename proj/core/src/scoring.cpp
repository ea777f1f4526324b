#include "slicerec/scoring.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "slicerec/evaluation.hpp"
#include "slicerec/losses.hpp"

namespace slicerec {

std::string metric_str(Metric m) {
  switch (m) {
    case Metric::l1: return "l1";
    case Metric::l2: return "l2";
    case Metric::dice: return "dice";
    case Metric::ssim: return "ssim";
  }
  throw ScoringError("bad metric enum");
}

Metric metric_parse(const std::string& s) {
  if (s == "l1") return Metric::l1;
  if (s == "l2") return Metric::l2;
  if (s == "dice") return Metric::dice;
  if (s == "ssim") return Metric::ssim;
  throw ConfigError("unknown metric '" + s + "'");
}

std::string aggregation_str(Aggregation a) {
  return a == Aggregation::average ? "average" : "maximum";
}

Aggregation aggregation_parse(const std::string& s) {
  if (s == "average" || s == "avg") return Aggregation::average;
  if (s == "maximum" || s == "max") return Aggregation::maximum;
  throw ConfigError("unknown aggregation '" + s + "'");
}

std::string ScoreKey::str() const {
  return metric_str(metric) + "_" + aggregation_str(agg);
}

int score_index(Metric m, Aggregation a) {
  for (int i = 0; i < 8; ++i)
    if (kScoreKeys[static_cast<std::size_t>(i)].metric == m &&
        kScoreKeys[static_cast<std::size_t>(i)].agg == a)
      return i;
  throw ScoringError("bad score key");
}

ScoreRecord score_scan(const std::string& scan_id, Cdr cdr,
                       const std::vector<ad::Tensor>& predictions,
                       const std::vector<ad::Tensor>& targets) {
  if (predictions.empty())
    throw ScoringError("scan '" + scan_id + "': no window predictions to score");
  if (predictions.size() != targets.size())
    throw ScoringError("scan '" + scan_id + "': " +
                       std::to_string(predictions.size()) +
                       " predictions vs " + std::to_string(targets.size()) +
                       " targets");
  ScoreRecord rec;
  rec.scan_id = scan_id;
  rec.cdr = cdr;
  std::array<double, 4> sum{};
  std::array<double, 4> max{};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    // Every per-window loss is oriented anomalous-high; SSIM enters as
    // its loss form 1 - ssim.
    const std::array<double, 4> loss = {
        l1_distance(predictions[i], targets[i]),
        l2_distance(predictions[i], targets[i]),
        soft_dice_loss(predictions[i], targets[i]),
        ssim_loss(predictions[i], targets[i]),
    };
    for (int m = 0; m < 4; ++m) {
      sum[static_cast<std::size_t>(m)] += loss[static_cast<std::size_t>(m)];
      if (i == 0 || loss[static_cast<std::size_t>(m)] > max[static_cast<std::size_t>(m)])
        max[static_cast<std::size_t>(m)] = loss[static_cast<std::size_t>(m)];
    }
  }
  const double n = static_cast<double>(predictions.size());
  const Metric ms[4] = {Metric::l1, Metric::l2, Metric::dice, Metric::ssim};
  for (int m = 0; m < 4; ++m) {
    rec.scores[static_cast<std::size_t>(score_index(ms[m], Aggregation::average))] =
        sum[static_cast<std::size_t>(m)] / n;
    rec.scores[static_cast<std::size_t>(score_index(ms[m], Aggregation::maximum))] =
        max[static_cast<std::size_t>(m)];
  }
  return rec;
}

ScoreSelection select_score(const std::vector<ScoreRecord>& validation) {
  int n_pos = 0, n_neg = 0;
  for (const ScoreRecord& r : validation)
    (r.cdr == Cdr::zero ? n_neg : n_pos)++;
  if (n_neg == 0 || n_pos == 0)
    throw SelectionError(
        "score selection needs both healthy and anomalous validation scans (" +
        std::to_string(n_neg) + " healthy, " + std::to_string(n_pos) +
        " anomalous)");

  std::vector<int> labels;
  labels.reserve(validation.size());
  for (const ScoreRecord& r : validation)
    labels.push_back(r.cdr == Cdr::zero ? 0 : 1);

  // Tie-break priority: metric l2 < l1 < ssim < dice, then average
  // before maximum within a metric.
  static constexpr ScoreKey kPriority[8] = {
      {Metric::l2, Aggregation::average},  {Metric::l2, Aggregation::maximum},
      {Metric::l1, Aggregation::average},  {Metric::l1, Aggregation::maximum},
      {Metric::ssim, Aggregation::average},{Metric::ssim, Aggregation::maximum},
      {Metric::dice, Aggregation::average},{Metric::dice, Aggregation::maximum},
  };
  ScoreSelection best;
  bool have = false;
  for (const ScoreKey& key : kPriority) {
    std::vector<double> scores;
    scores.reserve(validation.size());
    for (const ScoreRecord& r : validation)
      scores.push_back(r.score(key.metric, key.agg));
    const double a = auc(scores, labels);
    if (!have || a > best.validation_auc) {
      best.key = key;
      best.validation_auc = a;
      have = true;
    }
  }
  return best;
}

void write_score_table(const std::vector<ScoreRecord>& records,
                       std::ostream& out) {
  out << "scan_id\tcdr";
  for (const ScoreKey& k : kScoreKeys) out << '\t' << k.str();
  out << '\n';
  char buf[40];
  for (const ScoreRecord& r : records) {
    out << r.scan_id << '\t' << cdr_str(r.cdr);
    for (double s : r.scores) {
      std::snprintf(buf, sizeof buf, "%.17g", s);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

std::vector<ScoreRecord> read_score_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("score table is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string expect = "scan_id\tcdr";
  for (const ScoreKey& k : kScoreKeys) expect += "\t" + k.str();
  if (line != expect)
    throw FormatError("score table has unexpected header '" + line + "'");
  std::vector<ScoreRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    ScoreRecord r;
    if (!std::getline(ss, tok, '\t'))
      throw FormatError("score table line " + std::to_string(lineno) +
                        ": missing scan id");
    r.scan_id = tok;
    if (!std::getline(ss, tok, '\t'))
      throw FormatError("score table line " + std::to_string(lineno) +
                        ": missing cdr");
    r.cdr = cdr_parse(tok);
    for (int i = 0; i < 8; ++i) {
      if (!std::getline(ss, tok, '\t'))
        throw FormatError("score table line " + std::to_string(lineno) +
                          ": expected 8 score columns");
      try {
        std::size_t pos = 0;
        r.scores[static_cast<std::size_t>(i)] = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError("score table line " + std::to_string(lineno) +
                          ": bad number '" + tok + "'");
      }
    }
    if (std::getline(ss, tok, '\t'))
      throw FormatError("score table line " + std::to_string(lineno) +
                        ": trailing fields");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace slicerec
