#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stas/denoiser.hpp"
#include "stas/error.hpp"
#include "stas/random.hpp"

using namespace stas;

namespace {

ToyDiTConfig small_config() {
  ToyDiTConfig c;
  c.num_blocks = 4;
  c.hidden_size = 32;
  c.num_heads = 4;
  c.conditioning_size = 8;
  c.topology = build_topology(9, 4, 12);
  c.seed = 17;
  return c;
}

struct Inputs {
  LatentTensor z;
  std::vector<float> cond;
};

Inputs inputs_for(const ToyDiT& model, std::uint64_t seed) {
  const auto cond = gaussian_matrix(1, model.conditioning_size(), seed + 1);
  return {gaussian_matrix(model.topology().total_tokens(), model.latent_channels(), seed),
          {cond.values().begin(), cond.values().end()}};
}

double group_mean(const ActivationTensor& x, std::size_t d, const std::vector<TokenGroup>& groups, TokenGroup g) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (groups[i] != g) continue;
    sum += std::fabs(x(i, d));
    ++n;
  }
  return sum / static_cast<double>(n);
}

}  // namespace

TEST_CASE("oracle velocity examples") {
  const auto topo = build_topology(1, 4, 2);
  LatentTensor target(2, 1);
  target(0, 0) = 1.0f;
  target(1, 0) = -2.0f;
  const OracleDenoiser oracle(topo, target);
  LatentTensor z(2, 1);
  z(0, 0) = 3.0f;
  z(1, 0) = 0.0f;
  const auto v = oracle.forward(z, 0.5, {}).velocity;
  CHECK(v(0, 0) == 4.0f);
  CHECK(v(1, 0) == 4.0f);
  CHECK(oracle.forward(target, 1.0, {}).velocity == LatentTensor(2, 1, 0.0f));
  CHECK_THROWS_AS(oracle.forward(z, 0.0, {}), InvalidArgument);
  ForwardOptions hooked;
  hooked.capture_blocks = {0};
  CHECK_THROWS_AS(oracle.forward(z, 0.5, {}, hooked), InvalidArgument);
}

TEST_CASE("toy model is deterministic in its seed") {
  const auto a = ToyDiT::init_params(small_config());
  const auto b = ToyDiT::init_params(small_config());
  CHECK(a.checksum() == b.checksum());
  auto other = small_config();
  other.seed = 18;
  CHECK(ToyDiT::init_params(other).checksum() != a.checksum());

  const auto in = inputs_for(a, 3);
  CHECK(oracle::bit_equal(a.forward(in.z, 0.7, in.cond).velocity, b.forward(in.z, 0.7, in.cond).velocity));
}

TEST_CASE("forward output has the latent shape and is finite") {
  const auto model = ToyDiT::init_params(small_config());
  const auto in = inputs_for(model, 1);
  const auto out = model.forward(in.z, 0.3, in.cond);
  CHECK(out.velocity.same_shape(in.z));
  CHECK(out.velocity.all_finite());
  CHECK_THROWS_AS(model.forward(LatentTensor(5, 4), 0.3, in.cond), ShapeMismatch);
  CHECK_THROWS_AS(model.forward(in.z, 1.5, in.cond), InvalidArgument);
  CHECK_THROWS_AS(model.forward(in.z, 0.3, std::vector<float>(3)), ShapeMismatch);
}

TEST_CASE("an identity hook leaves the forward unchanged") {
  const auto model = ToyDiT::init_params(small_config());
  const auto in = inputs_for(model, 2);
  ForwardOptions opts;
  opts.capture_blocks = {0, 1, 2, 3};
  const auto plain = model.forward(in.z, 0.6, in.cond, opts);
  opts.hook = BlockHook{1, [](ActivationTensor&) {}};
  const auto hooked = model.forward(in.z, 0.6, in.cond, opts);
  CHECK(oracle::bit_equal(plain.velocity, hooked.velocity));
  for (std::size_t b = 0; b < 4; ++b) CHECK(oracle::bit_equal(plain.captured.at(b), hooked.captured.at(b)));
}

TEST_CASE("a hook only affects its block and later ones") {
  const auto model = ToyDiT::init_params(small_config());
  const auto in = inputs_for(model, 5);
  ForwardOptions opts;
  opts.capture_blocks = {0, 1, 2, 3};
  const auto plain = model.forward(in.z, 0.6, in.cond, opts);
  opts.capture_pre_hook = true;
  opts.hook = BlockHook{2, [](ActivationTensor& x) { x(0, 0) += 1.0f; }};
  const auto hooked = model.forward(in.z, 0.6, in.cond, opts);
  CHECK(oracle::bit_equal(plain.captured.at(0), hooked.captured.at(0)));
  CHECK(oracle::bit_equal(plain.captured.at(1), hooked.captured.at(1)));
  REQUIRE(hooked.pre_hook.has_value());
  CHECK(oracle::bit_equal(*hooked.pre_hook, plain.captured.at(2)));
  CHECK(hooked.captured.at(2)(0, 0) == plain.captured.at(2)(0, 0) + 1.0f);
  CHECK_FALSE(oracle::bit_equal(plain.velocity, hooked.velocity));
  opts.hook->block = 4;
  CHECK_THROWS_AS(model.forward(in.z, 0.6, in.cond, opts), InvalidArgument);
}

TEST_CASE("split forward matches the fused one") {
  const auto model = ToyDiT::init_params(small_config());
  const auto in = inputs_for(model, 6);
  auto x = model.embed(in.z, 0.4, in.cond);
  for (std::size_t b = 0; b < model.num_blocks(); ++b) model.run_block(b, x, 0.4);
  CHECK(oracle::bit_equal(model.head(x), model.forward(in.z, 0.4, in.cond).velocity));
}

TEST_CASE("attention rows are probability distributions") {
  const auto model = ToyDiT::init_params(small_config());
  const auto in = inputs_for(model, 7);
  const auto x = model.embed(in.z, 0.9, in.cond);
  const auto heads = model.attention_weights(0, x);
  CHECK(heads.size() == 4);
  for (const auto& w : heads) {
    CHECK(w.rows() == x.rows());
    CHECK(w.cols() == x.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < w.cols(); ++j) {
        CHECK(w(i, j) >= 0.0f);
        sum += w(i, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("row normalization yields zero mean and unit variance") {
  std::mt19937_64 rng(12);
  const auto x = oracle::random_matrix(rng, 6, 48, 5.0f);
  const auto n = normalize_rows(x);
  for (std::size_t i = 0; i < n.rows(); ++i) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < n.cols(); ++j) mean += n(i, j);
    mean /= n.cols();
    for (std::size_t j = 0; j < n.cols(); ++j) sq += (n(i, j) - mean) * (n(i, j) - mean);
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(sq / n.cols() == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("planted bias follows the positional ordering") {
  auto config = small_config();
  config.planted.push_back({1, {5}, {100.0f, 50.0f, 10.0f}, 25.0, BiasDecay::constant});
  const auto model = ToyDiT::init_params(config);
  const auto groups = token_groups(config.topology, 25.0);
  ForwardOptions opts;
  opts.capture_blocks = {1};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto in = inputs_for(model, seed);
    const auto x = model.forward(in.z, 0.5, in.cond, opts).captured.at(1);
    const double first = group_mean(x, 5, groups, TokenGroup::first_frame);
    const double bnd = group_mean(x, 5, groups, TokenGroup::boundary);
    const double inner = group_mean(x, 5, groups, TokenGroup::interior);
    CHECK(first > bnd);
    CHECK(bnd > inner);
  }

  config.planted[0].magnitudes = {1.0f, 2.0f, 0.0f};
  CHECK_THROWS_AS(validate(config), InvalidArgument);
}

TEST_CASE("proportional decay shrinks the planted offset with sigma") {
  auto config = small_config();
  auto off = config;
  config.planted.push_back({0, {3}, {100.0f, 50.0f, 10.0f}, 8.0, BiasDecay::proportional_to_sigma});
  const auto planted = ToyDiT::init_params(config);
  const auto plain = ToyDiT::init_params(off);
  const auto in = inputs_for(plain, 4);
  ForwardOptions opts;
  opts.capture_blocks = {0};
  for (const auto& [sigma, expect] : {std::pair{1.0, 100.0}, std::pair{0.25, 25.0}}) {
    const float a = planted.forward(in.z, sigma, in.cond, opts).captured.at(0)(0, 3);
    const float b = plain.forward(in.z, sigma, in.cond, opts).captured.at(0)(0, 3);
    CHECK(std::fabs(a) - std::fabs(b) == doctest::Approx(expect).epsilon(1e-4));
    CHECK(std::signbit(a) == std::signbit(b));
  }
}

TEST_CASE("planted decay gives a decreasing boundary-to-interior ratio over sigma") {
  auto config = small_config();
  config.planted.push_back({1, {5}, {40.0f, 20.0f, 4.0f}, 25.0, BiasDecay::proportional_to_sigma});
  const auto model = ToyDiT::init_params(config);
  const auto groups = token_groups(config.topology, 25.0);
  const auto in = inputs_for(model, 8);
  ForwardOptions opts;
  opts.capture_blocks = {1};
  double previous = INFINITY;
  for (double sigma : {1.0, 0.8, 0.6, 0.4, 0.2, 0.05}) {
    const auto x = model.forward(in.z, sigma, in.cond, opts).captured.at(1);
    const double ratio =
        group_mean(x, 5, groups, TokenGroup::boundary) / group_mean(x, 5, groups, TokenGroup::interior);
    CHECK(ratio < previous);
    previous = ratio;
  }
}

TEST_CASE("parameter checkpoints round-trip") {
  auto config = small_config();
  config.planted.push_back({2, {1, 4}, {9.0f, 3.0f, 1.0f}, 12.0, BiasDecay::proportional_to_sigma});
  const auto model = ToyDiT::init_params(config);
  const auto restored = ToyDiT::from_records(model.to_records());
  CHECK(restored.checksum() == model.checksum());
  CHECK(to_json(restored.config()) == to_json(config));
  const auto in = inputs_for(model, 9);
  CHECK(oracle::bit_equal(model.forward(in.z, 0.2, in.cond).velocity,
                          restored.forward(in.z, 0.2, in.cond).velocity));

  auto records = model.to_records();
  records.pop_back();
  CHECK_THROWS_AS(ToyDiT::from_records(records), InvalidArgument);
  CHECK(toy_config_from_json(to_json(config)).planted.size() == 1);
}
