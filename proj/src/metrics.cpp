#include "footreg/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace footreg {

ConfusionCounts confusion(const Tensor& pred, const Tensor& truth, float threshold) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("confusion", "prediction " + shape_to_string(pred.shape()) + " vs truth " +
                                      shape_to_string(truth.shape()));
  }
  ConfusionCounts c;
  const auto p = pred.data();
  const auto t = truth.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pp = p[i] >= threshold;
    const bool tt = t[i] >= 0.5f;
    if (pp && tt) ++c.tp;
    else if (pp) ++c.fp;
    else if (tt) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double den = b2 * precision + recall;
  return den > 0.0 ? (1.0 + b2) * precision * recall / den : 0.0;
}

Scores scores(const ConfusionCounts& c, double beta) {
  Scores s;
  const double tp = static_cast<double>(c.tp);
  auto ratio = [&](double num, double den) {
    if (den <= 0.0) {
      s.undefined = true;
      return 0.0;
    }
    return num / den;
  };
  s.recall = ratio(tp, tp + static_cast<double>(c.fn));
  s.precision = ratio(tp, tp + static_cast<double>(c.fp));
  s.iou = ratio(tp, tp + static_cast<double>(c.fp + c.fn));
  const double b2 = beta * beta;
  s.f_beta = ratio((1.0 + b2) * s.precision * s.recall, b2 * s.precision + s.recall);
  return s;
}

EvaluationRow evaluate_masks(const std::string& label, const std::vector<Tensor>& predictions,
                             const std::vector<Tensor>& truths) {
  if (predictions.size() != truths.size() || predictions.empty()) {
    throw std::invalid_argument("evaluate_masks: need equally many non-zero predictions and truths");
  }
  EvaluationRow row;
  row.label = label;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ConfusionCounts c = confusion(predictions[i], truths[i]);
    row.per_sample.push_back(c);
    row.pooled += c;
    const Scores s = scores(c);
    row.mean_scores.recall += s.recall;
    row.mean_scores.precision += s.precision;
    row.mean_scores.f_beta += s.f_beta;
    row.mean_scores.iou += s.iou;
    row.mean_scores.undefined = row.mean_scores.undefined || s.undefined;
  }
  const double n = static_cast<double>(predictions.size());
  row.mean_scores.recall /= n;
  row.mean_scores.precision /= n;
  row.mean_scores.f_beta /= n;
  row.mean_scores.iou /= n;
  row.pooled_scores = scores(row.pooled);
  return row;
}

EvaluationReport evaluate_dataset(NetworkBundle& bundle, const std::vector<SampleTriple>& triples) {
  if (triples.empty()) throw std::invalid_argument("evaluate_dataset: empty split");
  NoGradGuard no_grad;
  std::vector<Tensor> inputs, outputs, truths;
  for (const auto& t : triples) {
    const int h = t.input_mask.dim(1), w = t.input_mask.dim(2);
    Tensor x = reshape(t.input_mask, {1, 1, h, w});
    Tensor z = reshape(t.image, {1, 3, h, w});
    outputs.push_back(reshape(generator_forward(x, z, bundle, Mode::eval), {1, h, w}));
    inputs.push_back(t.input_mask);
    truths.push_back(t.ideal_mask);
  }
  return {evaluate_masks("input", inputs, truths), evaluate_masks("regularized", outputs, truths)};
}

std::string format_table_text(const std::vector<EvaluationRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "Metric" << std::right << std::setw(10) << "Recall"
      << std::setw(11) << "Precision" << std::setw(8) << "F0.5" << std::setw(8) << "IoU" << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    out << std::left << std::setw(14) << r.label << std::right << std::setw(10)
        << r.pooled_scores.recall << std::setw(11) << r.pooled_scores.precision << std::setw(8)
        << r.pooled_scores.f_beta << std::setw(8) << r.pooled_scores.iou << '\n';
  }
  return out.str();
}

std::string format_table_csv(const std::vector<EvaluationRow>& rows) {
  std::ostringstream out;
  out << "row,recall,precision,f0.5,iou,tp,fp,fn,tn,mean_recall,mean_precision,mean_f0.5,mean_iou\n";
  out << std::setprecision(6);
  for (const auto& r : rows) {
    const auto& p = r.pooled_scores;
    const auto& m = r.mean_scores;
    out << r.label << ',' << p.recall << ',' << p.precision << ',' << p.f_beta << ',' << p.iou << ','
        << r.pooled.tp << ',' << r.pooled.fp << ',' << r.pooled.fn << ',' << r.pooled.tn << ','
        << m.recall << ',' << m.precision << ',' << m.f_beta << ',' << m.iou << '\n';
  }
  return out.str();
}

}  // namespace footreg
