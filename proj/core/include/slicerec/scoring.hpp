#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "slicerec/tensor.hpp"
#include "slicerec/volume.hpp"

namespace slicerec {

// The anomaly-score bank: four reconstruction-error metrics, each
// aggregated over a scan's window positions by average and by maximum.
enum class Metric { l1, l2, dice, ssim };
enum class Aggregation { average, maximum };

std::string metric_str(Metric m);
Metric metric_parse(const std::string& s);
std::string aggregation_str(Aggregation a);
Aggregation aggregation_parse(const std::string& s);

struct ScoreKey {
  Metric metric;
  Aggregation agg;

  std::string str() const;  // e.g. "l2_average"
  bool operator==(const ScoreKey&) const = default;
};

// Column order of the score table.
inline constexpr std::array<ScoreKey, 8> kScoreKeys = {{
    {Metric::l1, Aggregation::average},
    {Metric::l1, Aggregation::maximum},
    {Metric::l2, Aggregation::average},
    {Metric::l2, Aggregation::maximum},
    {Metric::dice, Aggregation::average},
    {Metric::dice, Aggregation::maximum},
    {Metric::ssim, Aggregation::average},
    {Metric::ssim, Aggregation::maximum},
}};

int score_index(Metric m, Aggregation a);

struct ScoreRecord {
  std::string scan_id;
  Cdr cdr = Cdr::zero;
  std::array<double, 8> scores{};

  double score(Metric m, Aggregation a) const {
    return scores[score_index(m, a)];
  }
};

// Per-window losses for one scan reduced to the eight scores. All eight
// are oriented so that larger means more anomalous (SSIM enters as
// 1 - SSIM). predictions and targets are parallel [3, H, W] stacks.
ScoreRecord score_scan(const std::string& scan_id, Cdr cdr,
                       const std::vector<ad::Tensor>& predictions,
                       const std::vector<ad::Tensor>& targets);

struct ScoreSelection {
  ScoreKey key{Metric::l2, Aggregation::average};
  double validation_auc = 0.0;
};

// Pick the score with the highest AUC on validation records
// (healthy = negative, any non-zero CDR = positive). Ties break toward
// metric order l2 < l1 < ssim < dice, then average before maximum.
ScoreSelection select_score(const std::vector<ScoreRecord>& validation);

// TSV round-trip: header "scan_id cdr <8 keys>", %.17g values.
void write_score_table(const std::vector<ScoreRecord>& records,
                       std::ostream& out);
std::vector<ScoreRecord> read_score_table(std::istream& in);

}  // namespace slicerec
