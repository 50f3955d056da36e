#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "footreg/networks.hpp"
#include "footreg/synthdata.hpp"
#include "footreg/tensor.hpp"

namespace footreg {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Pixels with value >= threshold are positive, for both prediction and truth.
ConfusionCounts confusion(const Tensor& pred, const Tensor& truth, float threshold = 0.5f);

struct Scores {
  double recall = 0.0;
  double precision = 0.0;
  double f_beta = 0.0;
  double iou = 0.0;
  bool undefined = false;  // some denominator was empty and its metric set to 0
};

Scores scores(const ConfusionCounts& c, double beta = 0.5);
/// F-beta from precision and recall directly.
double f_beta(double precision, double recall, double beta = 0.5);

struct EvaluationRow {
  std::string label;
  ConfusionCounts pooled;
  Scores pooled_scores;     // canonical: from pooled counts
  Scores mean_scores;       // mean of per-sample scores
  std::vector<ConfusionCounts> per_sample;
};

struct EvaluationReport {
  EvaluationRow baseline;     // input masks x against y
  EvaluationRow regularized;  // G(x, z) against y
};

EvaluationRow evaluate_masks(const std::string& label, const std::vector<Tensor>& predictions,
                             const std::vector<Tensor>& truths);
/// Runs the generator in eval mode over the triples.
EvaluationReport evaluate_dataset(NetworkBundle& bundle, const std::vector<SampleTriple>& triples);

std::string format_table_text(const std::vector<EvaluationRow>& rows);
std::string format_table_csv(const std::vector<EvaluationRow>& rows);

}  // namespace footreg
