#include <doctest.h>

#include <iomanip>
#include <sstream>

#include "footreg/metrics.hpp"
#include "oracles.hpp"

using namespace footreg;

TEST_SUITE("metrics") {

TEST_CASE("confusion counts") {
  Tensor pred = Tensor::from_data({1, 2, 3}, {0.9f, 0.5f, 0.49f, 0.0f, 1.0f, 0.2f});
  Tensor truth = Tensor::from_data({1, 2, 3}, {1, 0, 1, 0, 1, 1});
  const ConfusionCounts c = confusion(pred, truth);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 2);
  CHECK(c.tn == 1);
  CHECK(c.total() == 6);
  CHECK_THROWS(confusion(pred, Tensor::zeros({1, 3, 2})));
}

TEST_CASE("scores from counts") {
  const Scores s = scores({6, 2, 3, 89});
  CHECK(s.precision == doctest::Approx(0.75));
  CHECK(s.recall == doctest::Approx(6.0 / 9));
  CHECK(s.iou == doctest::Approx(6.0 / 11));
  CHECK(s.f_beta == doctest::Approx(oracle::f_beta(0.75, 6.0 / 9, 0.5)));
  CHECK_FALSE(s.undefined);

  const Scores empty = scores({0, 0, 0, 10});
  CHECK(empty.undefined);
  CHECK(empty.iou == 0.0);

  Tensor y = Tensor::from_data({1, 2, 2}, {1, 0, 1, 1});
  const Scores self = scores(confusion(y, y));
  CHECK(self.iou == 1.0);
  CHECK(self.f_beta == 1.0);
  CHECK(self.precision == 1.0);
  CHECK(self.recall == 1.0);
}

TEST_CASE("F0.5 against reference precision and recall pairs") {
  struct Row { double p, r, f; };
  for (Row row : {Row{0.933, 0.885, 0.923}, Row{0.932, 0.854, 0.916}, Row{0.932, 0.909, 0.927}}) {
    CHECK(std::abs(f_beta(row.p, row.r, 0.5) - row.f) <= 0.001);
    CHECK(f_beta(row.p, row.r, 0.5) == doctest::Approx(oracle::f_beta(row.p, row.r, 0.5)).epsilon(1e-12));
  }
  CHECK(f_beta(0.0, 0.0) == 0.0);
  CHECK(f_beta(0.5, 0.5, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("pooled and mean rows") {
  std::vector<Tensor> preds{Tensor::from_data({1, 1, 2}, {1, 0}), Tensor::from_data({1, 1, 4}, {1, 1, 1, 1})};
  std::vector<Tensor> truths{Tensor::from_data({1, 1, 2}, {1, 1}), Tensor::from_data({1, 1, 4}, {1, 1, 1, 1})};
  const EvaluationRow row = evaluate_masks("demo", preds, truths);
  CHECK(row.per_sample.size() == 2u);
  CHECK(row.pooled == ConfusionCounts{5, 0, 1, 0});
  CHECK(row.pooled_scores.iou == doctest::Approx(5.0 / 6));
  CHECK(row.mean_scores.iou == doctest::Approx((0.5 + 1.0) / 2));
  CHECK_THROWS(evaluate_masks("bad", preds, {truths[0]}));
}

TEST_CASE("text and CSV tables agree") {
  std::vector<Tensor> p{Tensor::from_data({1, 1, 4}, {1, 0, 1, 1})}, t{Tensor::from_data({1, 1, 4}, {1, 1, 0, 1})};
  const EvaluationRow a = evaluate_masks("input", p, t), b = evaluate_masks("ideal", t, t);
  const std::string csv = format_table_csv({a, b});
  const std::string txt = format_table_text({a, b});
  CHECK(csv.rfind("row,recall,precision,f0.5,iou,", 0) == 0);
  for (const char* col : {"Recall", "Precision", "F0.5", "IoU"}) CHECK(txt.find(col) != std::string::npos);

  std::istringstream csv_lines(csv), txt_lines(txt);
  std::string c_line, t_line;
  std::getline(csv_lines, c_line);
  std::getline(txt_lines, t_line);
  while (std::getline(csv_lines, c_line)) {
    REQUIRE(std::getline(txt_lines, t_line));
    std::istringstream cells(c_line), words(t_line);
    std::string label, word;
    std::getline(cells, label, ',');
    words >> word;
    CHECK(word == label);
    for (int k = 0; k < 4; ++k) {
      std::string cell;
      std::getline(cells, cell, ',');
      words >> word;
      std::ostringstream rounded;
      rounded << std::fixed << std::setprecision(3) << std::stod(cell);
      CHECK(word == rounded.str());
    }
  }
  CHECK(t_line.find("1.000") != std::string::npos);
}

}  // TEST_SUITE
