#include <doctest.h>

#include <algorithm>

#include "eflab/corruption.hpp"
#include "eflab/metrics.hpp"

using namespace eflab;

namespace {
constexpr int a = 0, b = 1, c = 2, img = 3;

MixedSequence with_image(std::vector<int> const& before, std::vector<int> const& after, std::size_t prompt = 0) {
  auto s = MixedSequence::from_tokens(before, prompt);
  Eigen::VectorXd v(2);
  v << 1.0, -2.0;
  s.elements.push_back(Element::image(v, 1.0));
  for (int t : after) s.elements.push_back(Element::token(t));
  return s;
}

void check_invariants(MixedSequence const& x1, CorruptionRecord const& rec) {
  REQUIRE(rec.bags.size() == rec.x_t.size() + 1);
  std::size_t total = rec.x_t.generated_size();
  for (std::size_t g = 0; g < rec.bags.size(); ++g) {
    CHECK(rec.counts[g] == rec.bags[g].size());
    total += rec.counts[g];
  }
  for (std::size_t g = 0; g < x1.prompt_len; ++g) CHECK(rec.bags[g].empty());
  CHECK(total == x1.generated_size());
  CHECK(reconstruct_symbols(rec, img) == x1.symbols(img));
  // bag position = surviving elements strictly left of the deleted one
  std::size_t bag_idx = 0;
  for (std::size_t i = 0, j = 0; i < x1.size(); ++i) {
    if (j < rec.alignment.size() && rec.alignment[j] == i) {
      ++j;
      ++bag_idx;
    } else {
      CHECK(rec.bags[bag_idx].size() > 0);
    }
  }
}
}  // namespace

TEST_CASE("forced extremes") {
  Rng rng(1);
  auto const ab = MixedSequence::from_tokens({a, b});
  auto const none = corrupt_at(ab, Schedule::linear(), GenerationMode::text_only, 0.0, img, rng);
  CHECK(none.x_t.empty());
  CHECK(none.bags == std::vector<std::vector<int>>{{a, b}});
  CHECK(none.counts == std::vector<std::size_t>{2});
  auto const all = corrupt_at(ab, Schedule::linear(), GenerationMode::text_only, 1.0, img, rng);
  CHECK(all.x_t == ab);
  CHECK(all.counts == std::vector<std::size_t>{0, 0, 0});
}

TEST_CASE("marginal survival is kappa") {
  Rng rng(3);
  auto const abc = MixedSequence::from_tokens({a, b, c});
  std::size_t const n = 100000;
  std::array<std::size_t, 3> kept{};
  for (std::size_t r = 0; r < n; ++r) {
    auto const rec = corrupt_at(abc, Schedule::linear(), GenerationMode::text_only, 0.5, img, rng);
    for (auto idx : rec.alignment) ++kept[idx];
  }
  for (auto k : kept) CHECK(metrics::within_binomial(k, n, 0.5));
}

TEST_CASE("image deletion time") {
  Rng rng(5);
  auto const lin = Schedule::linear();
  for (int i = 0; i < 1000; ++i) {
    CHECK(deletion_time_of_image(lin, 0.0, rng).deleted);
    auto const f = deletion_time_of_image(lin, 2.0, rng);
    CHECK_FALSE(f.deleted);
    CHECK(f.t_img == 1.0);
  }
  std::size_t const n = 100000;
  std::size_t del = 0;
  for (std::size_t i = 0; i < n; ++i) del += deletion_time_of_image(lin, 0.5, rng).deleted;
  CHECK(metrics::within_binomial(del, n, 0.5));
}

TEST_CASE("structural invariants over random corruptions") {
  Rng rng(8);
  std::vector<MixedSequence> xs{MixedSequence::from_tokens({a, b, c, a}), with_image({a, b}, {c}),
                                with_image({c, a}, {b, b}, 1), MixedSequence::from_tokens({c}, 1)};
  for (auto mode : {GenerationMode::interleaved, GenerationMode::independent, GenerationMode::text_only})
    for (auto const& x : xs)
      for (int r = 0; r < 500; ++r) {
        auto const rec = corrupt(x, Schedule::polynomial(2.0), mode, img, rng);
        check_invariants(x, rec);
        for (std::size_t i = 0; i < x.prompt_len; ++i) CHECK(rec.x_t.elements[i] == x.elements[i]);
        if (mode == GenerationMode::independent) CHECK(rec.deleted_images == 0);
        if (mode == GenerationMode::interleaved) CHECK(rec.tau_text.tau <= 2.0);
        else CHECK(rec.tau_text.tau <= 1.0);
      }
}

TEST_CASE("surviving images carry the interpolant") {
  Rng rng(9);
  auto const x = with_image({a}, {b});
  for (int r = 0; r < 200; ++r) {
    auto const rec = corrupt(x, Schedule::linear(), GenerationMode::interleaved, img, rng);
    REQUIRE(rec.flow_targets.size() == rec.x_t.image_count());
    REQUIRE(rec.image_times.size() == rec.flow_targets.size());
    for (std::size_t k = 0; k < rec.flow_targets.size(); ++k) {
      auto const& ft = rec.flow_targets[k];
      auto const& blk = rec.x_t.elements[ft.element].image();
      CHECK(ft.t == rec.image_times[k].clipped());
      CHECK(blk.t() == ft.t);
      CHECK((blk.values - (ft.t * ft.y1 + (1 - ft.t) * ft.y0)).norm() < 1e-14);
      CHECK(ft.y1 == x.elements[1].image().values);
    }
    if (rec.deleted_images == 1) {
      std::size_t imgs_in_bags = 0;
      for (auto const& bag : rec.bags) imgs_in_bags += std::count(bag.begin(), bag.end(), img);
      CHECK(imgs_in_bags == 1);
    }
  }
}

TEST_CASE("interleaved presence law from corrupt_at") {
  Rng rng(12);
  auto const x = with_image({}, {});
  for (double tau : {0.25, 0.5, 0.75, 1.0, 1.5}) {
    std::size_t const n = 100000;
    std::size_t present = 0;
    for (std::size_t r = 0; r < n; ++r)
      present += corrupt_at(x, Schedule::linear(), GenerationMode::interleaved, tau, img, rng).deleted_images == 0;
    CHECK(metrics::within_binomial(present, n, std::min(1.0, tau)));
  }
}

TEST_CASE("retention law") {
  Rng rng(13);
  auto const x = MixedSequence::from_tokens({a, b, c, a, b});
  std::size_t const n = 100000;
  std::size_t kept = 0;
  for (std::size_t r = 0; r < n; ++r) kept += corrupt(x, Schedule::linear(), GenerationMode::text_only, img, rng).x_t.size();
  double const frac = static_cast<double>(kept) / (5.0 * n);
  CHECK(std::abs(frac - 0.5) <= 0.005);
}

TEST_CASE("bad times and modes") {
  Rng rng(1);
  auto const x = MixedSequence::from_tokens({a});
  CHECK_THROWS_AS(corrupt_at(x, Schedule::linear(), GenerationMode::text_only, 1.5, img, rng), DomainError);
  CHECK_THROWS_AS(parse_mode("sideways"), ConfigError);
  CHECK(parse_mode("text-only") == GenerationMode::text_only);
  auto const j = to_json(corrupt(x, Schedule::linear(), GenerationMode::interleaved, img, rng));
  CHECK(j.contains("bags"));
  CHECK(j.contains("tau_text"));
}
