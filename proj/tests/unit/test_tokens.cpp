#include <random>

#include "doctest.h"
#include "mgract/synth.hpp"
#include "mgract/tokens.hpp"

using namespace mgract;

namespace {

double y_spread(const ActionToken& t) { return std::sqrt(reconstruct_covariance(t.scale, t.quat)(1, 1)); }

PoseSequence still_pose(int frames) {
  MotionSpec spec;
  spec.amplitude = 0;
  spec.noise_sigma = 0;
  spec.duration_s = frames / 30.0;
  PoseSequence seq = generate(spec);
  for (auto& f : seq.frames) f = seq.frames.front();
  return seq;
}

}  // namespace

TEST_CASE("token packing is [mu; s; q]") {
  ActionToken t;
  t.mu = Vector3d(1, 2, 3);
  t.scale = Vector3d(4, 5, 6);
  t.quat = Vector4d(0.5, 0.5, 0.5, 0.5);
  const auto p = t.packed();
  for (int i = 0; i < 10; ++i) CHECK(p(i) == doctest::Approx(i < 6 ? i + 1 : 0.5));
  const ActionToken back = ActionToken::unpack(std::span<const double>(p.data(), 10));
  CHECK(back.mu == t.mu);
  CHECK(back.quat == t.quat);
}

TEST_CASE("tokens follow temporal order") {
  GmmModel<double> m;
  m.components.push_back({0.5, Vector3d(1, 1, 0.7), Matrix3d::Identity()});
  m.components.push_back({0.5, Vector3d(2, 2, 0.2), Matrix3d::Identity()});
  const auto tokens = tokens_from_gmm(m);
  REQUIRE(tokens.size() == 2u);
  CHECK(tokens[0].mu(2) == 0.2);
  CHECK(tokens[1].mu(2) == 0.7);
  CHECK(weights_in_token_order(m) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("K=1 token carries the cluster mean") {
  GmmModel<double> m;
  m.components.push_back({1.0, Vector3d(0.3, 0.4, 0.5), Vector3d(0.04, 0.01, 0.09).asDiagonal()});
  const auto t = tokens_from_gmm(m).front();
  CHECK(t.mu == Vector3d(0.3, 0.4, 0.5));
  CHECK((t.scale - Vector3d(0.3, 0.2, 0.1)).norm() < 1e-12);
}

TEST_CASE("tokenize: 17 joints, K=6 gives two 17x6x10 tensors") {
  MotionSpec spec;
  spec.seed = 3;
  spec.noise_sigma = 0.005;
  spec.duration_s = 2;
  const StreamTokens tok = tokenize_sequence(normalize(generate(spec)), HseConfig{}, MgrConfig{});
  CHECK(tok.joint.entities() == 17);
  CHECK(tok.joint.components() == 6);
  CHECK(tok.bone.same_shape(tok.joint));
  CHECK(tok.joint.size() == 17u * 6u * 10u);
  for (int e = 0; e < 17; ++e) CHECK(tok.joint_weights.row(e).sum() == doctest::Approx(1.0));
}

TEST_CASE("stationary skeleton collapses spatial scales to the floor") {
  MgrConfig cfg;
  cfg.eps_floor = 1e-6;
  const StreamTokens tok = tokenize_sequence(normalize(still_pose(60)), HseConfig{}, cfg);
  for (const TokenTensor* t : {&tok.joint, &tok.bone}) {
    for (int e = 0; e < t->entities(); ++e) {
      for (int k = 0; k < t->components(); ++k) {
        const ActionToken tk = t->token(e, k);
        const Matrix3d cov = reconstruct_covariance(tk.scale, tk.quat);
        CHECK(std::sqrt(cov(0, 0)) <= std::sqrt(1e-6 * 1.01));
        CHECK(std::sqrt(cov(1, 1)) <= std::sqrt(1e-6 * 1.01));
      }
    }
  }
}

TEST_CASE("compression clip: wrist tokens spread more vertically than the nose") {
  MotionSpec spec;
  spec.seed = 5;
  spec.noise_sigma = 0.002;
  spec.duration_s = 2;
  const NormalizedSequence seq = normalize(generate(spec));
  const StreamTokens tok = tokenize_sequence(seq, HseConfig{}, MgrConfig{});
  const int nose = coco17().find("nose");
  for (const char* wrist : {"left_wrist", "right_wrist"}) {
    const int w = coco17().find(wrist);
    double wrist_min = 1e9, nose_max = 0;
    for (int k = 0; k < 6; ++k) {
      wrist_min = std::min(wrist_min, y_spread(tok.joint.token(w, k)));
      nose_max = std::max(nose_max, y_spread(tok.joint.token(nose, k)));
    }
    CHECK(wrist_min > nose_max);
  }
}

TEST_CASE("token files round-trip exactly") {
  MotionSpec spec;
  spec.seed = 8;
  spec.duration_s = 1;
  StreamTokens tok = tokenize_sequence(normalize(generate(spec)), HseConfig{}, MgrConfig{});
  tok.label = "correct";
  const StreamTokens back = parse_token_file(token_file_json(tok, R"({"tool":"x"})"));
  CHECK(back.joint == tok.joint);
  CHECK(back.bone == tok.bone);
  CHECK(back.joint_weights == tok.joint_weights);
  CHECK(back.k == 6);
  CHECK(back.label == std::optional<std::string>("correct"));
  CHECK_THROWS_AS(parse_token_file(R"({"version":2})"), TokenizeError);
}

TEST_CASE("BIC selection gives one K for the whole clip") {
  MotionSpec spec;
  spec.seed = 2;
  spec.noise_sigma = 0.005;
  spec.duration_s = 2;
  MgrConfig cfg;
  cfg.k_range = KRange{2, 10};
  const StreamTokens tok = tokenize_sequence(normalize(generate(spec)), HseConfig{}, cfg);
  CHECK(tok.k >= 2);
  CHECK(tok.k <= 10);
  CHECK(tok.joint.components() == tok.k);
  CHECK(tok.bone.components() == tok.k);
}

TEST_CASE("thread count does not change the tokens") {
  MotionSpec spec;
  spec.seed = 4;
  spec.noise_sigma = 0.005;
  spec.duration_s = 2;
  const NormalizedSequence seq = normalize(generate(spec));
  MgrConfig one, four;
  four.threads = 4;
  const auto a = tokenize_sequence(seq, HseConfig{}, one);
  const auto b = tokenize_sequence(seq, HseConfig{}, four);
  CHECK(a.joint == b.joint);
  CHECK(a.bone == b.bone);
}
