#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "evseg/errors.hpp"
#include "evseg/labeler.hpp"

using namespace evseg;

namespace {

// O(bins^2) oracle: evaluates the between-class objective directly from
// fresh class sums for every candidate split, mirroring the candidate rule
// (background class must be non-empty) and low tie-breaking.
OtsuResult otsu_brute_force(const ResidualHistogram& hist) {
  const int bins = hist.bins();
  const double total = static_cast<double>(hist.total);

  double sum_all = 0;
  for (int k = 0; k < bins; ++k)
    sum_all += static_cast<double>(hist.counts[k]) * hist.bin_center(k);
  const double mu = sum_all / total;

  double best_sigma = -1.0;
  int best_t = 0;
  for (int t = 0; t < bins; ++t) {
    double count_bg = 0, sum_bg = 0;
    for (int k = 0; k <= t; ++k) {
      count_bg += static_cast<double>(hist.counts[k]);
      sum_bg += static_cast<double>(hist.counts[k]) * hist.bin_center(k);
    }
    if (count_bg == 0) continue;
    double count_imo = 0, sum_imo = 0;
    for (int k = t + 1; k < bins; ++k) {
      count_imo += static_cast<double>(hist.counts[k]);
      sum_imo += static_cast<double>(hist.counts[k]) * hist.bin_center(k);
    }
    const double mu_bg = sum_bg / count_bg;
    double sigma = (count_bg / total) * (mu_bg - mu) * (mu_bg - mu);
    if (count_imo > 0) {
      const double mu_imo = sum_imo / count_imo;
      sigma += (count_imo / total) * (mu_imo - mu) * (mu_imo - mu);
    }
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_t = t;
    }
  }
  double total_var = 0;
  for (int k = 0; k < bins; ++k) {
    const double d = hist.bin_center(k) - mu;
    total_var += static_cast<double>(hist.counts[k]) * d * d;
  }
  return {(best_t + 1) * hist.bin_width(), best_sigma, total_var / total};
}

ResidualHistogram histogram_from_counts(const std::vector<uint64_t>& counts,
                                        double clip_value = 10.0) {
  ResidualHistogram hist;
  hist.counts = counts;
  hist.clip_value = clip_value;
  for (uint64_t c : counts) hist.total += c;
  return hist;
}

ResidualField constant_residual(int w, int h, double value) {
  ResidualField res;
  res.r = Raster<double>(w, h, value);
  res.valid = MaskRaster(w, h, 1);
  return res;
}

FlowField constant_flow(int w, int h, double u, double v, double dt = 0.025) {
  FlowField f(w, h, dt);
  for (size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = u;
    f.v[i] = v;
  }
  return f;
}

// Naive single-pass morphology passes, independent of the implementation.
MaskRaster naive_dilate(const MaskRaster& in, int radius) {
  MaskRaster out(in.width(), in.height(), 0);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int dy = -radius; dy <= radius && !out.at(x, y); ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && xx < in.width() && yy >= 0 && yy < in.height() && in.at(xx, yy)) {
            out.at(x, y) = 1;
            break;
          }
        }
  return out;
}

MaskRaster naive_erode(const MaskRaster& in, int radius) {
  MaskRaster out(in.width(), in.height(), 1);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int dy = -radius; dy <= radius && out.at(x, y); ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx, yy = y + dy;
          const bool fg = xx >= 0 && xx < in.width() && yy >= 0 && yy < in.height() &&
                          in.at(xx, yy);
          if (!fg) {
            out.at(x, y) = 0;
            break;
          }
        }
  return out;
}

LabelMask mask_from_bits(const MaskRaster& bits) {
  LabelMask mask;
  mask.label = Raster<uint8_t>(bits.width(), bits.height(), 0);
  for (size_t i = 0; i < bits.size(); ++i)
    mask.label[i] = bits[i] ? static_cast<uint8_t>(Label::imo)
                            : static_cast<uint8_t>(Label::background);
  mask.decision.accepted = true;
  return mask;
}

}  // namespace

TEST_CASE("residual_field: identical fields give zero residual") {
  const FlowField a = constant_flow(16, 12, 1.5, -0.5);
  const ResidualField res = residual_field(a, a);
  for (size_t i = 0; i < res.r.size(); ++i) CHECK(res.r[i] == 0.0);
}

TEST_CASE("residual_field: constant (3,4) offset gives residual 5") {
  const FlowField rigid = constant_flow(16, 12, 1.0, 1.0);
  const FlowField observed = constant_flow(16, 12, 4.0, 5.0);
  const ResidualField res = residual_field(observed, rigid);
  for (size_t i = 0; i < res.r.size(); ++i) CHECK(res.r[i] == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("residual_field: matches a per-pixel norm oracle on random fields") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-4.0, 4.0);
  FlowField a = constant_flow(20, 15, 0, 0), b = constant_flow(20, 15, 0, 0);
  for (size_t i = 0; i < a.u.size(); ++i) {
    a.u[i] = d(rng); a.v[i] = d(rng);
    b.u[i] = d(rng); b.v[i] = d(rng);
  }
  a.valid.at(3, 3) = 0;
  const ResidualField res = residual_field(a, b);
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 20; ++x) {
      if (!a.valid.at(x, y)) {
        REQUIRE(res.valid.at(x, y) == 0);
        continue;
      }
      const double du = a.u.at(x, y) - b.u.at(x, y);
      const double dv = a.v.at(x, y) - b.v.at(x, y);
      REQUIRE(res.r.at(x, y) == doctest::Approx(std::sqrt(du * du + dv * dv)).epsilon(1e-14));
    }
}

TEST_CASE("residual_field: dt mismatch is a unit error") {
  const FlowField a = constant_flow(8, 8, 0, 0, 0.025);
  const FlowField b = constant_flow(8, 8, 0, 0, 0.05);
  CHECK_THROWS_AS(residual_field(a, b), UnitError);
}

TEST_CASE("build_histogram clips into the last bin and counts valid pixels") {
  ResidualField res = constant_residual(4, 4, 0.0);
  res.r.at(0, 0) = 25.0;   // beyond clip
  res.r.at(1, 0) = 10.0;   // exactly at clip
  res.r.at(2, 0) = 9.99;
  res.valid.at(3, 3) = 0;
  const ResidualHistogram hist = build_histogram(res, 256, 10.0);
  CHECK(hist.total == 15);
  CHECK(hist.counts[255] == 3);
  CHECK(hist.counts[0] == 12);
  uint64_t sum = 0;
  for (uint64_t c : hist.counts) sum += c;
  CHECK(sum == hist.total);
}

TEST_CASE("otsu_threshold: all mass in one bin selects that bin's upper edge") {
  std::vector<uint64_t> counts(256, 0);
  counts[37] = 1000;
  const ResidualHistogram hist = histogram_from_counts(counts);
  const OtsuResult otsu = otsu_threshold(hist);
  CHECK(otsu.threshold == 38 * hist.bin_width());
  CHECK(otsu.between_class_variance == 0.0);
}

TEST_CASE("otsu_threshold: bimodal spikes split between the modes") {
  std::vector<uint64_t> counts(256, 0);
  counts[2] = 500;   // ~0.1 px
  counts[51] = 500;  // ~2.0 px
  const ResidualHistogram hist = histogram_from_counts(counts);
  const OtsuResult otsu = otsu_threshold(hist);
  // Lowest tie on the empty plateau between the modes: upper edge of bin 2.
  CHECK(otsu.threshold == otsu_brute_force(hist).threshold);
  CHECK(otsu.threshold == 0.1171875);
  CHECK(otsu.threshold > hist.bin_center(2));
  CHECK(otsu.threshold < hist.bin_center(51));
  // Clean separation: the split explains the whole variance.
  CHECK(otsu.between_class_variance ==
        doctest::Approx(otsu.total_variance).epsilon(1e-12));
}

TEST_CASE("otsu_threshold: equals the brute-force oracle on 1000 random histograms") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<uint64_t> count(0, 500);
  std::uniform_int_distribution<int> sparse(0, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<uint64_t> counts(256, 0);
    for (auto& c : counts)
      if (sparse(rng) == 0) c = count(rng);
    ResidualHistogram hist = histogram_from_counts(counts);
    if (hist.total == 0) continue;
    const OtsuResult fast = otsu_threshold(hist);
    const OtsuResult brute = otsu_brute_force(hist);
    REQUIRE(fast.threshold == brute.threshold);
    REQUIRE(fast.between_class_variance == brute.between_class_variance);
  }
}

TEST_CASE("otsu_threshold: within + between class variance equals total variance") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<uint64_t> count(0, 1000);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<uint64_t> counts(256, 0);
    for (auto& c : counts) c = count(rng);
    const ResidualHistogram hist = histogram_from_counts(counts);
    const OtsuResult otsu = otsu_threshold(hist);
    const int split = static_cast<int>(std::llround(otsu.threshold / hist.bin_width())) - 1;

    double c0 = 0, s0 = 0, c1 = 0, s1 = 0;
    for (int k = 0; k < hist.bins(); ++k) {
      const double c = static_cast<double>(hist.counts[k]);
      if (k <= split) { c0 += c; s0 += c * hist.bin_center(k); }
      else { c1 += c; s1 += c * hist.bin_center(k); }
    }
    const double total = c0 + c1;
    double within = 0;
    for (int k = 0; k < hist.bins(); ++k) {
      const double c = static_cast<double>(hist.counts[k]);
      const double mu_class = k <= split ? s0 / c0 : s1 / c1;
      const double d = hist.bin_center(k) - mu_class;
      within += c * d * d;
    }
    within /= total;
    REQUIRE(within + otsu.between_class_variance ==
            doctest::Approx(otsu.total_variance).epsilon(1e-9));
  }
}

TEST_CASE("otsu_threshold: scale covariance") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> d(0.0, 6.0);
  ResidualField res = constant_residual(40, 30, 0.0);
  for (auto& r : res.r) r = d(rng);

  for (double c : {2.0, 0.5, 4.0}) {
    const ResidualHistogram base = build_histogram(res, 256, 10.0);
    ResidualField scaled = res;
    for (auto& r : scaled.r) r *= c;
    const ResidualHistogram hist_c = build_histogram(scaled, 256, c * 10.0);
    CHECK(base.counts == hist_c.counts);  // bin indices invariant
    CHECK(otsu_threshold(hist_c).threshold == c * otsu_threshold(base).threshold);
  }
}

TEST_CASE("otsu_threshold: empty histogram is an error") {
  const ResidualHistogram hist = histogram_from_counts(std::vector<uint64_t>(256, 0));
  CHECK_THROWS_AS(otsu_threshold(hist), std::invalid_argument);
}

TEST_CASE("decide_threshold: clean bimodal histogram is accepted under defaults") {
  std::vector<uint64_t> counts(256, 0);
  counts[3] = 7000;   // background mode ~0.14 px
  counts[64] = 3000;  // IMO mode ~2.5 px
  const ThresholdDecision d = decide_threshold(histogram_from_counts(counts));
  CHECK(d.accepted);
  CHECK(d.rejection_reason == RejectionReason::none);
}

TEST_CASE("decide_threshold: near-uniform histogram rejected for high total variance") {
  const ThresholdDecision d =
      decide_threshold(histogram_from_counts(std::vector<uint64_t>(256, 40)));
  // Uniform residuals over [0, 10] px have variance ~100/12 > 4.
  CHECK(d.total_variance == doctest::Approx(100.0 / 12.0).epsilon(0.01));
  CHECK_FALSE(d.accepted);
  CHECK(d.rejection_reason == RejectionReason::total_variance_too_high);
}

TEST_CASE("decide_threshold: tight unimodal histogram rejected for low separation") {
  std::vector<uint64_t> counts(256, 0);
  counts[2] = 5000;
  counts[3] = 5000;
  const ThresholdDecision d = decide_threshold(histogram_from_counts(counts));
  CHECK_FALSE(d.accepted);
  CHECK(d.rejection_reason == RejectionReason::separation_too_low);
  CHECK(d.threshold > 0);  // diagnostics still filled
}

TEST_CASE("decide_threshold: stage-1 comparator direction is configurable") {
  const ResidualHistogram uniform = histogram_from_counts(std::vector<uint64_t>(256, 40));
  CHECK(decide_threshold(uniform, 4.0, 0.25, true).rejection_reason ==
        RejectionReason::total_variance_too_high);
  // Flipped comparator: high-variance slices pass stage 1 (then fail stage 2
  // or not depending on separation).
  const ThresholdDecision flipped = decide_threshold(uniform, 4.0, 0.0, false);
  CHECK(flipped.accepted);
}

TEST_CASE("make_label_mask: zero residual against threshold 1 is all background") {
  const ResidualField res = constant_residual(8, 8, 0.0);
  ThresholdDecision d;
  d.accepted = true;
  d.threshold = 1.0;
  const LabelMask mask = make_label_mask(res, d);
  for (size_t i = 0; i < mask.label.size(); ++i)
    CHECK(mask.label[i] == static_cast<uint8_t>(Label::background));
}

TEST_CASE("make_label_mask: box of high residual labels exactly the box") {
  ResidualField res = constant_residual(20, 20, 0.0);
  for (int y = 5; y < 12; ++y)
    for (int x = 4; x < 10; ++x) res.r.at(x, y) = 5.0;
  res.valid.at(0, 19) = 0;
  ThresholdDecision d;
  d.accepted = true;
  d.threshold = 1.0;
  const LabelMask mask = make_label_mask(res, d, 0.125);
  CHECK(mask.slice_time == 0.125);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      const bool in_box = x >= 4 && x < 10 && y >= 5 && y < 12;
      if (!res.valid.at(x, y))
        REQUIRE(mask.label.at(x, y) == static_cast<uint8_t>(Label::invalid));
      else
        REQUIRE(mask.label.at(x, y) ==
                static_cast<uint8_t>(in_box ? Label::imo : Label::background));
    }
}

TEST_CASE("make_label_mask: residual exactly at the threshold stays background") {
  const ResidualField res = constant_residual(4, 4, 1.0);
  ThresholdDecision d;
  d.accepted = true;
  d.threshold = 1.0;
  const LabelMask mask = make_label_mask(res, d);
  CHECK(mask.label[0] == static_cast<uint8_t>(Label::background));
}

TEST_CASE("make_label_mask: rejected decision is a contract violation") {
  const ResidualField res = constant_residual(4, 4, 0.0);
  ThresholdDecision d;
  d.accepted = false;
  d.rejection_reason = RejectionReason::separation_too_low;
  CHECK_THROWS_AS(make_label_mask(res, d), ContractViolation);
}

TEST_CASE("make_label_mask: raising the threshold never grows the imo set") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(0.0, 8.0);
  ResidualField res = constant_residual(30, 30, 0.0);
  for (auto& r : res.r) r = d(rng);
  ThresholdDecision lo, hi;
  lo.accepted = hi.accepted = true;
  lo.threshold = 2.0;
  hi.threshold = 3.5;
  const LabelMask mask_lo = make_label_mask(res, lo);
  const LabelMask mask_hi = make_label_mask(res, hi);
  for (size_t i = 0; i < mask_lo.label.size(); ++i)
    if (mask_hi.label[i] == static_cast<uint8_t>(Label::imo))
      REQUIRE(mask_lo.label[i] == static_cast<uint8_t>(Label::imo));
}

TEST_CASE("morphological_close: radius 0 is the identity") {
  std::mt19937_64 rng(19);
  MaskRaster bits(16, 16, 0);
  for (auto& b : bits) b = rng() & 1;
  const LabelMask mask = mask_from_bits(bits);
  const LabelMask out = morphological_close(mask, 0);
  CHECK(out.label == mask.label);
}

TEST_CASE("morphological_close: fills an interior hole") {
  MaskRaster bits(20, 20, 0);
  for (int y = 5; y < 15; ++y)
    for (int x = 5; x < 15; ++x) bits.at(x, y) = 1;
  bits.at(9, 9) = 0;  // hole
  const LabelMask out = morphological_close(mask_from_bits(bits), 1);
  CHECK(out.label.at(9, 9) == static_cast<uint8_t>(Label::imo));
}

TEST_CASE("morphological_close: equals the dilate-then-erode oracle on random masks") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    MaskRaster bits(24, 18, 0);
    for (auto& b : bits) b = (rng() % 4) == 0;
    const LabelMask closed = morphological_close(mask_from_bits(bits), 2);
    const MaskRaster expected = naive_erode(naive_dilate(bits, 2), 2);
    for (size_t i = 0; i < bits.size(); ++i)
      REQUIRE(closed.label[i] == (expected[i] ? static_cast<uint8_t>(Label::imo)
                                              : static_cast<uint8_t>(Label::background)));
  }
}

TEST_CASE("morphological_close: idempotent") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    MaskRaster bits(24, 18, 0);
    for (auto& b : bits) b = (rng() % 3) == 0;
    for (int radius : {1, 2}) {
      const LabelMask once = morphological_close(mask_from_bits(bits), radius);
      const LabelMask twice = morphological_close(once, radius);
      REQUIRE(twice.label == once.label);
    }
  }
}

TEST_CASE("morphological_close: invalid pixels act as background and are restored") {
  MaskRaster bits(20, 20, 0);
  for (int y = 5; y < 15; ++y)
    for (int x = 5; x < 15; ++x) bits.at(x, y) = 1;
  LabelMask mask = mask_from_bits(bits);
  mask.label.at(9, 9) = static_cast<uint8_t>(Label::invalid);
  const LabelMask out = morphological_close(mask, 1);
  CHECK(out.label.at(9, 9) == static_cast<uint8_t>(Label::invalid));
  CHECK(out.label.at(8, 9) == static_cast<uint8_t>(Label::imo));
}
