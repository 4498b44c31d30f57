#include "otbayes/ot_bayes.hpp"
#include "otbayes/random.hpp"
#include "otbayes/serialization.hpp"

#include <doctest.h>

#include <filesystem>

using namespace otbayes;

namespace {

MapPair sample_pair() {
  Rng rng = make_rng(1);
  JointSamples s{Matrix(60, 2), Matrix(60, 1)};
  for (Eigen::Index i = 0; i < 60; ++i) {
    s.x(i, 0) = standard_normal(rng);
    s.x(i, 1) = standard_normal(rng);
    s.y(i, 0) = s.x(i, 0) + standard_normal(rng);
  }
  auto af = default_potential_arch(2, 1), aT = default_map_arch(2, 1);
  af.hidden_width = aT.hidden_width = 5;
  return initial_pair(s, af, aT, 3);
}

}  // namespace

TEST_CASE("map pair round-trips bit for bit") {
  const MapPair p = sample_pair();
  const MapPair q = decode_map_pair(encode_map_pair(p));
  CHECK(q.f.spec == p.f.spec);
  CHECK(q.T.spec == p.T.spec);
  CHECK(q.f.values == p.f.values);
  CHECK(q.T.values == p.T.values);
  REQUIRE(q.T.enkf.has_value());
  CHECK(q.T.enkf->gain == p.T.enkf->gain);
  CHECK(q.T.normalization.input_scale == p.T.normalization.input_scale);
  const Vector in = (Vector(3) << 0.1, -0.4, 0.7).finished();
  CHECK(diffnet::forward(q.T, in) == diffnet::forward(p.T, in));

  const auto path = std::filesystem::temp_directory_path() / "otbayes_pair.bin";
  save_map_pair(path, p);
  CHECK(load_map_pair(path).T.values == p.T.values);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt map files are rejected") {
  auto bytes = encode_map_pair(sample_pair());
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_map_pair(truncated), FormatError);
  auto foreign = bytes;
  foreign[0] = 'X';
  CHECK_THROWS_AS(decode_map_pair(foreign), FormatError);
  auto future = bytes;
  future[8] = 99;  // version follows the 8-byte magic
  CHECK_THROWS_AS(decode_map_pair(future), FormatError);
  CHECK_THROWS_AS(decode_ensembles(bytes), FormatError);
  CHECK_THROWS(load_map_pair("/nonexistent/otbayes.bin"));
}

TEST_CASE("ensemble series round-trip, with and without weights") {
  std::vector<Ensemble> es;
  es.emplace_back(Matrix::Random(4, 2));
  es.emplace_back(Matrix::Random(3, 2), (Vector(3) << 0.2, 0.3, 0.5).finished());
  const auto back = decode_ensembles(encode_ensembles(es));
  REQUIRE(back.size() == 2);
  CHECK(back[0].particles() == es[0].particles());
  CHECK_FALSE(back[0].has_weights());
  CHECK(back[1].has_weights());
  CHECK(back[1].weights() == es[1].weights());
}
