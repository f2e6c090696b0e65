#include <cmath>
#include <random>

#include "conceptlab/error.hpp"
#include "conceptlab/metrics.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace conceptlab;

namespace {

const FeatureVocab kVocab;

// Plain two-pass Pearson, written independently of the library.
double pearson_sq(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double cov = sxy - sx * sy / n;
  return cov * cov / ((sxx - sx * sx / n) * (syy - sy * sy / n));
}

LabelSeries series_of(std::size_t n_sets, std::size_t per_set, auto correct) {
  LabelSeries s;
  std::size_t flat = 0;
  for (std::size_t set = 0; set < n_sets; ++set) {
    for (std::size_t i = 0; i < per_set; ++i, ++flat) {
      LabelRecord r;
      r.set_index = set;
      r.object_index = i;
      r.gold = flat % 2 == 0;
      r.model = correct(flat) ? r.gold : !r.gold;
      s.push_back(r);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("r squared examples and oracle") {
  std::vector<double> m{0.1, 0.5, 0.9}, h{0.2, 0.4, 0.9};
  auto c = r_squared(std::span<const double>(m), std::span<const double>(h));
  CHECK(c.r_squared == doctest::Approx(pearson_sq(m, h)).epsilon(1e-12));
  // 0.28^2 / (0.32 * 0.26)
  CHECK(c.r_squared == doctest::Approx(49.0 / 52.0).epsilon(1e-12));
  CHECK(c.n == 3);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(20), y(20);
    for (int i = 0; i < 20; ++i) {
      x[i] = u(rng);
      y[i] = 0.5 * x[i] + u(rng);
    }
    CHECK(r_squared(std::span<const double>(x), std::span<const double>(y)).r_squared ==
          doctest::Approx(pearson_sq(x, y)).epsilon(1e-9));
  }

  std::vector<std::optional<double>> partial{0.2, std::nullopt, 0.4, 0.9};
  std::vector<double> m4{0.1, 123.0, 0.5, 0.9};
  CHECK(r_squared(std::span<const double>(m4), std::span<const std::optional<double>>(partial)).r_squared ==
        doctest::Approx(c.r_squared));

  std::vector<double> flat{0.3, 0.3, 0.3};
  CHECK_THROWS_AS(r_squared(std::span<const double>(flat), std::span<const double>(h)), DataError);
  CHECK_THROWS_AS(r_squared(std::span<const double>(m.data(), 1), std::span<const double>(h.data(), 1)),
                  DataError);
}

TEST_CASE("chance and cross entropy") {
  CHECK(chance_baseline(0.8) == 0.68);
  CHECK(chance_baseline(0.5) == 0.5);
  CHECK(cross_entropy({1, 0}, {0.5, 0.5}).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy({0.5, 0.5}, {0.5, 0.5}).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy({1, 0}, {0, 1}).infinite);
  CHECK(cross_entropy({0, 1}, {0, 1}).loss == 0.0);
  std::vector<BinaryDist> t{{1, 0}, {0, 1}}, q{{0.5, 0.5}, {0.25, 0.75}};
  CHECK(cross_entropy(t, q).loss == doctest::Approx(std::log(2.0) - std::log(0.75)));
}

TEST_CASE("accuracy windows") {
  CHECK(last_quarter_size(75) == 19);
  CHECK(last_quarter_size(4) == 1);
  CHECK(last_quarter_size(5) == 2);
  CHECK(last_quarter_size(0) == 0);

  // 25 sets of 3; wrong only inside the first 56 objects.
  auto s = series_of(25, 3, [](std::size_t i) { return i >= 56 || i % 4 != 0; });
  CHECK_NOTHROW(validate_series(s));
  auto lq = accuracy_counts(s, Window::LastQuarter);
  CHECK(lq.den == 19);
  CHECK(lq.is_one());
  auto all = accuracy_counts(s, Window::Overall);
  CHECK(all.den == 75);
  CHECK(all.num == 75 - 14);

  // Per-set accuracies recombine into the overall figure.
  std::size_t num = 0, den = 0;
  for (auto f : per_set_accuracy(s)) {
    num += f.num;
    den += f.den;
  }
  CHECK(num == all.num);
  CHECK(den == all.den);

  // Exclusions shrink the window after it is placed.
  s[74].model.reset();
  s[73].model.reset();
  auto lq2 = accuracy_counts(s, Window::LastQuarter);
  CHECK(lq2.den == 17);
  for (auto& r : s) r.model.reset();
  CHECK_THROWS_AS(accuracy(s, Window::Overall), DataError);

  LabelSeries bad(2);
  bad[1].object_index = 0;
  CHECK_THROWS_AS(validate_series(bad), DataError);
}

TEST_CASE("quantiles and bands") {
  std::vector<double> v;
  for (int i = 1; i <= 10; ++i) v.push_back(i / 10.0);
  CHECK(quantile(v, 0.25) == doctest::Approx(0.325));
  CHECK(quantile(v, 0.5) == doctest::Approx(0.55));
  CHECK(quantile(v, 0.0) == 0.1);
  CHECK(quantile(v, 1.0) == 1.0);
  Bands b = bands(v);
  CHECK(b.q25 == doctest::Approx(0.325));
  CHECK(band_below(b, 0.05) == 1);
  CHECK(band_below(b, 0.3) == 25);
  CHECK(band_below(b, 0.9) == 0);
  CHECK_THROWS_AS(quantile({}, 0.5), DataError);
}

TEST_CASE("rule grading") {
  Concept blue = parse_concept("(is-color blue)", kVocab);
  Concept circle = parse_concept("(is-shape circle)", kVocab);
  ExemplarList list = generate_list("b", "(is-color blue)", blue, kVocab, 8, 25);
  Evidence ev = evidence_before(list, list.sets.size());
  CHECK(rule_likelihood(blue, ev).is_one());
  CHECK_FALSE(rule_likelihood(circle, ev).is_one());

  // Nine of ten labels agree with the reported rule.
  std::vector<ConsistencyItem> items;
  for (std::size_t i = 0; i < 10; ++i) {
    Context c = ev[i].context;
    items.push_back({blue, c, i == 3 ? !eval(blue, c) : eval(blue, c)});
  }
  CHECK(consistency(items).value() == doctest::Approx(0.9));

  std::vector<FinalRule> finals{
      {"equiv", parse_concept("(not (not (is-color blue)))", kVocab), &list},
      {"wrong", circle, &list},
      {"missing", std::nullopt, &list},
      {"exact", blue, &list},
  };
  auto summary = match_rate(finals);
  CHECK(summary.likelihood_match_rate == 0.5);
  CHECK(summary.equivalence_match_rate == 0.5);
  CHECK(summary.verdicts[0].equivalent == true);
  CHECK(summary.verdicts[1].equivalent == false);
}

TEST_CASE("consistency of a noisy labeler matches its closed form") {
  // Labels follow the rule with probability alpha, otherwise a coin with bias beta.
  Concept rule = parse_concept("(is-shape circle)", kVocab);
  const double alpha = 0.7, beta = 0.5;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<ConsistencyItem> items;
  double agree = 0;
  for (int i = 0; i < 40000; ++i) {
    Context c = testing::random_context(rng, kVocab);
    const bool truth = eval(rule, c);
    agree += truth ? beta : 1 - beta;
    const bool label = u(rng) < alpha ? truth : u(rng) < beta;
    items.push_back({rule, c, label});
  }
  const double expected = alpha + (1 - alpha) * agree / static_cast<double>(items.size());
  CHECK(consistency(items).value() == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("cohort comparison") {
  std::vector<RuleCohort> cohorts{
      {"easy", {0.8, 0.9, 1.0, 1.0}, 0.99},
      {"hard", {0.5, 0.6, 0.7, 0.8}, 0.4},
      {"nomodel", {0.5, 0.6}, std::nullopt},
  };
  auto rep = cohort_report(cohorts, 200, 1);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].rule_id == "easy");
  CHECK(rep.rows[1].rule_id == "hard");
  CHECK(rep.rows[2].rule_id == "nomodel");
  CHECK(rep.rows[1].band == 1);
  CHECK(*rep.model_bottom_quartile_rate == 0.5);
  // Each rule has one of four humans strictly below its q25.
  CHECK(rep.subsample_bottom_quartile.mean == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("trajectory aggregation") {
  ExemplarList list = generate_list("b", "(is-color blue)", parse_concept("(is-color blue)", kVocab),
                                    kVocab, 3, 0);
  for (int s = 0; s < 4; ++s) {
    list.sets.push_back({{*parse_object("small blue circle", kVocab), *parse_object("large green circle", kVocab)},
                         {true, false}});
  }
  auto perfect = series_of(4, 2, [](std::size_t) { return true; });
  auto half = series_of(4, 2, [](std::size_t i) { return i % 2 == 0; });
  std::vector<LabelSeries> members{perfect, half};
  auto rep = trajectory("model", members, list);
  CHECK(rep.chance == 0.5);
  REQUIRE(rep.points.size() == 4);
  for (const auto& p : rep.points) {
    CHECK(p.members == 2);
    CHECK(p.mean_accuracy == doctest::Approx(0.75));
  }
}
