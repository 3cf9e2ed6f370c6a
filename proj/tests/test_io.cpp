#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "bnnlv/io.hpp"

using namespace bnnlv;

namespace {

std::filesystem::path temp_dir() {
  const auto d = std::filesystem::temp_directory_path() / "bnnlv_test_io";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Json, ConfigsRoundTrip) {
  const Architecture a{2, 1, {7, 3}, 2, 0.2};
  EXPECT_EQ(architecture_from_json(to_json(a)), a);

  PriorConfig p;
  p.sigma2_w = 0.3;
  p.sigma2_z = 0.01;
  p.eb_enabled_z = false;
  const PriorConfig pb = priors_from_json(to_json(p));
  EXPECT_EQ(pb.sigma2_w, p.sigma2_w);
  EXPECT_EQ(pb.sigma2_z, p.sigma2_z);
  EXPECT_EQ(pb.eb_enabled_z, false);

  NcaiConfig c;
  c.eps_t = 3e-4;
  c.lambda2 = 0;
  const NcaiConfig cb = ncai_from_json(to_json(c));
  EXPECT_EQ(cb.eps_t, c.eps_t);
  EXPECT_EQ(cb.lambda2, 0.0);
}

TEST(Json, PosteriorRoundTripIsBitwise) {
  Rng rng(1);
  const Architecture a{1, 2, {4}, 1, 0.01};
  MeanFieldPosterior q = MeanFieldPosterior::zeros(a, 6);
  for (auto& v : q.mu_w) v = rng.normal() * 1e-7;
  for (auto& v : q.rho_w) v = rng.normal();
  for (auto& v : q.mu_z.data) v = rng.normal() / 3;
  for (auto& v : q.rho_z.data) v = rng.normal() * 1e5;
  const std::string text = to_json(q).dump();
  const MeanFieldPosterior back = posterior_from_json(Json::parse(text));
  EXPECT_EQ(back.arch, a);
  EXPECT_EQ(back.pack(), q.pack());
}

TEST(Json, ModelRoundTrip) {
  TrainResult r;
  r.method = Method::BNNLV_BBB;
  r.q = MeanFieldPosterior::zeros(Architecture{1, 1, {3}, 1, 0.01}, 4);
  r.q.mu_w[2] = 0.1;
  r.priors.sigma2_w = 2.5;
  Standardization s;
  s.x_mean = {1.0};
  s.x_std = {2.0};
  s.y_mean = {-1.0};
  s.y_std = {0.5};
  const SavedModel m = model_from_json(model_to_json(r, s));
  EXPECT_EQ(m.result.method, Method::BNNLV_BBB);
  EXPECT_EQ(m.result.q.pack(), r.q.pack());
  EXPECT_EQ(m.result.priors.sigma2_w, 2.5);
  EXPECT_EQ(m.transform.y_std, s.y_std);
}

TEST(Json, MissingMetricsAreNull) {
  MetricsReport r;
  r.test_avg_ll = -1.5;
  const Json j = to_json(r);
  EXPECT_EQ(j.at("test_avg_ll").get<double>(), -1.5);
  EXPECT_TRUE(j.at("mi_x_muz").is_null());
  EXPECT_TRUE(j.at("ks_stat").is_null());
}

TEST(Json, ErrorsOnMissingFieldsAndBadShapes) {
  EXPECT_THROW(matrix_from_json(Json{{"rows", 2}, {"cols", 2}}), ParseError);
  EXPECT_THROW(matrix_from_json(Json{{"rows", 2}, {"cols", 2}, {"data", {1.0, 2.0}}}), ShapeError);
}

TEST(Files, AtomicWriteAndRead) {
  const auto dir = temp_dir() / "nested" / "deeper";
  std::filesystem::remove_all(temp_dir() / "nested");
  const auto p = dir / "out.json";
  write_json_atomic(p, Json{{"a", 1}});
  EXPECT_FALSE(std::filesystem::exists(p.string() + ".tmp"));
  EXPECT_EQ(read_json(p).at("a").get<int>(), 1);
  write_json_atomic(p, Json{{"a", 2}});
  EXPECT_EQ(read_json(p).at("a").get<int>(), 2);

  const auto bad = temp_dir() / "bad.json";
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  EXPECT_THROW(read_json(bad), ParseError);
  EXPECT_THROW(read_json(temp_dir() / "absent.json"), ConfigError);
}
