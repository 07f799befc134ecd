#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <vector>

#include "sfp/augment.hpp"
#include "sfp/io.hpp"
#include "sfp/model.hpp"
#include "sfp/rng.hpp"
#include "sfp/simnet.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using sfp::Matrix;
using sfp::ModelWeights;
using sfp::SimNetParams;
using sfp::Tensor4;
using sfp::TrainConfig;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor4 random_batch(int n, int rows, int cols, std::uint64_t seed) {
  Tensor4 x(n, 1, rows, cols);
  sfp::CounterRng rng(seed);
  for (double& v : x.v) v = rng.next_normal();
  return x;
}

bool vec_equal(const sfp::Vector& a, const sfp::Vector& b) {
  return a.size() == b.size() && (a - b).cwiseAbs().maxCoeff() == 0.0;
}

bool mat_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a - b).cwiseAbs().maxCoeff() == 0.0;
}

bool bn_equal(const sfp::BatchNormParams& a, const sfp::BatchNormParams& b) {
  return vec_equal(a.gamma, b.gamma) && vec_equal(a.beta, b.beta) &&
         vec_equal(a.running_mean, b.running_mean) &&
         vec_equal(a.running_var, b.running_var);
}

bool params_equal(const SimNetParams& a, const SimNetParams& b) {
  if (a.n_f != b.n_f || a.h != b.h || a.widths != b.widths ||
      a.epochs_trained != b.epochs_trained)
    return false;
  if (!mat_equal(a.stem.weight, b.stem.weight) ||
      !bn_equal(a.stem_bn, b.stem_bn))
    return false;
  if (a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const auto& x = a.blocks[i];
    const auto& y = b.blocks[i];
    if (x.stride != y.stride || x.has_projection != y.has_projection)
      return false;
    if (!mat_equal(x.conv1.weight, y.conv1.weight) ||
        !bn_equal(x.bn1, y.bn1) ||
        !mat_equal(x.conv2.weight, y.conv2.weight) || !bn_equal(x.bn2, y.bn2))
      return false;
    if (x.has_projection &&
        (!mat_equal(x.proj.weight, y.proj.weight) ||
         !bn_equal(x.proj_bn, y.proj_bn)))
      return false;
  }
  return mat_equal(a.fc_w, b.fc_w) && a.fc_b == b.fc_b;
}

// A tiny two-class corpus of real fingerprints.
sfp::TrainingSet tiny_corpus(int n_f, int h) {
  sfp::ToyModelConfig cfg;
  cfg.d_model = 12;
  cfg.d = 8;
  cfg.n_layers = n_f;
  ModelWeights target = sfp::generate_toy_model(cfg, 100);
  std::vector<ModelWeights> related = {
      sfp::derive_related_model(target, 0.05, 101)};
  std::vector<ModelWeights> unrelated = {sfp::generate_toy_model(cfg, 102),
                                         sfp::generate_toy_model(cfg, 103)};
  sfp::AugmentPlan plan;
  plan.noise_alphas = {0.005};
  plan.seed = 9;
  return sfp::build_training_set(target, related, unrelated, plan, n_f, h);
}

}  // namespace

TEST_CASE("simnet_init builds the documented architecture") {
  SimNetParams p = sfp::simnet_init(4, 8, sfp::toy_widths(), 1);
  CHECK(p.input_rows() == 16);
  CHECK(p.input_cols() == 8);
  CHECK(p.epochs_trained == 0);
  REQUIRE(int(p.blocks.size()) == 10);

  // Strides 1,2,2,2,1 at stage entry, 1 inside.
  std::vector<int> strides;
  for (const auto& b : p.blocks) strides.push_back(b.stride);
  CHECK(strides == std::vector<int>{1, 1, 2, 1, 2, 1, 2, 1, 1, 1});

  // Projections exactly where stride or width changes.
  std::vector<bool> proj;
  for (const auto& b : p.blocks) proj.push_back(b.has_projection);
  CHECK(proj == std::vector<bool>{false, false, true, false, true, false, true,
                                  false, false, false});

  // Shapes: out_c x in_c*3*3 for the 3x3 convs, 1x1 for projections.
  CHECK(p.stem.weight.rows() == 4);
  CHECK(p.stem.weight.cols() == 9);  // one input channel
  CHECK(p.blocks[2].conv1.weight.rows() == 8);
  CHECK(p.blocks[2].conv1.weight.cols() == 4 * 9);
  CHECK(p.blocks[2].proj.weight.rows() == 8);
  CHECK(p.blocks[2].proj.weight.cols() == 4);  // 1x1 kernel
  CHECK(p.fc_w.rows() == 1);
  CHECK(p.fc_w.cols() == 32);

  // Fresh norms: unit scale, zero shift, standard running stats.
  CHECK(p.stem_bn.gamma.minCoeff() == 1.0);
  CHECK(p.stem_bn.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.stem_bn.running_mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.stem_bn.running_var.minCoeff() == 1.0);

  // Deterministic in the seed.
  SimNetParams q = sfp::simnet_init(4, 8, sfp::toy_widths(), 1);
  CHECK(params_equal(p, q));
  SimNetParams r = sfp::simnet_init(4, 8, sfp::toy_widths(), 2);
  CHECK_FALSE(mat_equal(p.stem.weight, r.stem.weight));
}

TEST_CASE("simnet_init rejects impossible shapes") {
  CHECK_THROWS_AS(sfp::simnet_init(1, 8, sfp::toy_widths(), 0), sfp::Error);
  CHECK_THROWS_AS(sfp::simnet_init(4, 4, sfp::toy_widths(), 0), sfp::Error);
  CHECK_THROWS_AS(sfp::simnet_init(4, 8, {4, 4, 8}, 0), sfp::Error);
  CHECK_THROWS_AS(sfp::simnet_init(4, 8, {4, 4, 8, 16, 32, 0}, 0), sfp::Error);
}

TEST_CASE("training-mode forward matches the loop oracle") {
  SimNetParams p = sfp::simnet_init(3, 8, sfp::toy_widths(), 5);
  Tensor4 x = random_batch(3, p.input_rows(), p.input_cols(), 77);
  std::vector<double> labels = {1.0, 0.0, 1.0};

  std::vector<double> logits = oracle::simnet_logits(p, x, /*train=*/true);
  sfp::BatchLoss got = sfp::simnet_loss(p, x, labels, 0.01, false);

  REQUIRE(got.scores.size() == logits.size());
  double want_loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    CHECK(oracle::relative_err(got.scores[i], sigmoid(logits[i])) < 1e-10);
    double target = labels[i] * (1.0 - 0.01) + (1.0 - labels[i]) * 0.01;
    double s = sigmoid(logits[i]);
    want_loss += -(target * std::log(s) + (1.0 - target) * std::log(1.0 - s));
  }
  want_loss /= double(logits.size());
  CHECK(oracle::relative_err(got.loss, want_loss) < 1e-10);
}

TEST_CASE("evaluation scores use running statistics and match the oracle") {
  SimNetParams p = sfp::simnet_init(3, 8, sfp::toy_widths(), 6);
  // Move the running stats off their init values first.
  Tensor4 warm = random_batch(4, p.input_rows(), p.input_cols(), 50);
  sfp::simnet_loss(p, warm, {1, 0, 1, 0}, 0.01, /*update_running=*/true);

  sfp::ToyModelConfig cfg;
  cfg.d_model = 12;
  cfg.d = 8;
  cfg.n_layers = 3;
  sfp::Fingerprint fp =
      sfp::extract_fingerprint(sfp::generate_toy_model(cfg, 7), 3, 8);

  Tensor4 x(1, 1, p.input_rows(), p.input_cols());
  for (int r = 0; r < p.input_rows(); ++r)
    for (int c = 0; c < p.input_cols(); ++c) x.at(0, 0, r, c) = fp.data(r, c);
  double want = sigmoid(oracle::simnet_logits(p, x, /*train=*/false)[0]);
  CHECK(oracle::relative_err(sfp::simnet_score(p, fp), want) < 1e-10);

  // Stacked scoring equals one-at-a-time scoring.
  std::vector<sfp::Fingerprint> fps = {fp, fp, fp};
  std::vector<double> scores = sfp::simnet_scores(p, fps);
  for (double s : scores) CHECK(s == sfp::simnet_score(p, fp));

  sfp::Verdict v = sfp::simnet_verify(p, fp, 0.0);
  CHECK(v.related == (v.score > 0.0));
  CHECK(sfp::simnet_verify(p, fp, 1.0).related == false);

  sfp::Fingerprint wrong = fp;
  wrong.top_k = 4;
  CHECK_THROWS_AS(sfp::simnet_score(p, wrong), sfp::Error);
}

TEST_CASE("update_running folds batch statistics in at the momentum rate") {
  SimNetParams p = sfp::simnet_init(2, 8, sfp::toy_widths(), 8);
  Tensor4 x = random_batch(3, p.input_rows(), p.input_cols(), 60);

  // Stem conv output statistics, computed naively.
  Tensor4 conv = oracle::conv2d(x, p.stem.weight, 1, 3, 1, 1);
  const int m = conv.n * conv.h * conv.w;
  sfp::Vector mean = sfp::Vector::Zero(conv.c);
  sfp::Vector var = sfp::Vector::Zero(conv.c);
  for (int i = 0; i < conv.n; ++i)
    for (int ch = 0; ch < conv.c; ++ch)
      for (int y = 0; y < conv.h; ++y)
        for (int xx = 0; xx < conv.w; ++xx) mean(ch) += conv.at(i, ch, y, xx);
  mean /= double(m);
  for (int i = 0; i < conv.n; ++i)
    for (int ch = 0; ch < conv.c; ++ch)
      for (int y = 0; y < conv.h; ++y)
        for (int xx = 0; xx < conv.w; ++xx) {
          double d = conv.at(i, ch, y, xx) - mean(ch);
          var(ch) += d * d;
        }
  var /= double(m);

  SimNetParams frozen = p;
  sfp::simnet_loss(frozen, x, {1, 0, 1}, 0.01, /*update_running=*/false);
  CHECK(frozen.stem_bn.running_mean.cwiseAbs().maxCoeff() == 0.0);

  sfp::simnet_loss(p, x, {1, 0, 1}, 0.01, /*update_running=*/true);
  const double mom = p.stem_bn.momentum;
  const double correction = double(m) / double(m - 1);
  for (int ch = 0; ch < conv.c; ++ch) {
    CHECK(oracle::relative_err(p.stem_bn.running_mean(ch), mom * mean(ch)) <
          1e-9);
    CHECK(oracle::relative_err(p.stem_bn.running_var(ch),
                               (1.0 - mom) * 1.0 +
                                   mom * correction * var(ch)) < 1e-9);
  }
}

TEST_CASE("backward pass agrees with central differences") {
  SimNetParams p = sfp::simnet_init(2, 8, sfp::toy_widths(), 9);
  Tensor4 x = random_batch(2, p.input_rows(), p.input_cols(), 61);
  std::vector<double> labels = {1.0, 0.0};

  auto loss_at = [&]() {
    SimNetParams scratch = p;  // keep running stats pristine either way
    return sfp::simnet_loss(scratch, x, labels, 0.01, false).loss;
  };
  sfp::BatchLoss base = sfp::simnet_loss(p, x, labels, 0.01, false);

  const double step = 1e-5;
  auto agree = [&](double got, double* slot) {
    double want = oracle::central_diff(loss_at, slot, step);
    if (std::abs(want) < 1e-8)
      CHECK(std::abs(got - want) < 1e-7);
    else
      CHECK(oracle::relative_err(got, want) < 1e-4);
  };

  // A spread of weight coordinates: stem, a projected block's three convs,
  // norm scales and shifts, and the head.
  agree(base.grads.stem_w(0, 0), &p.stem.weight(0, 0));
  agree(base.grads.stem_w(3, 7), &p.stem.weight(3, 7));
  agree(base.grads.blocks[2].conv1_w(1, 5), &p.blocks[2].conv1.weight(1, 5));
  agree(base.grads.blocks[2].conv2_w(4, 17), &p.blocks[2].conv2.weight(4, 17));
  agree(base.grads.blocks[2].proj_w(2, 3), &p.blocks[2].proj.weight(2, 3));
  agree(base.grads.blocks[0].conv1_w(2, 20), &p.blocks[0].conv1.weight(2, 20));
  agree(base.grads.blocks[9].conv2_w(7, 100),
        &p.blocks[9].conv2.weight(7, 100));
  agree(base.grads.stem_bn.gamma(1), &p.stem_bn.gamma(1));
  agree(base.grads.stem_bn.beta(2), &p.stem_bn.beta(2));
  agree(base.grads.blocks[4].bn2.gamma(3), &p.blocks[4].bn2.gamma(3));
  agree(base.grads.blocks[6].proj_bn.beta(5), &p.blocks[6].proj_bn.beta(5));
  agree(base.grads.fc_w(0, 0), &p.fc_w(0, 0));
  agree(base.grads.fc_w(0, 31), &p.fc_w(0, 31));
  agree(base.grads.fc_b, &p.fc_b);

  // Input gradient drives the sign-perturbation pass; check a few entries.
  for (std::size_t i : {std::size_t(0), std::size_t(37), std::size_t(100)})
    agree(base.input_grad.v[i], &x.v[i]);
}

TEST_CASE("corpus_batch stacks fingerprints in order") {
  sfp::TrainingSet corpus = tiny_corpus(2, 8);
  Tensor4 x = sfp::corpus_batch(corpus, 2, 8);
  CHECK(x.n == int(corpus.items.size()));
  CHECK(x.c == 1);
  CHECK(x.h == 8);
  CHECK(x.w == 8);
  for (int i = 0; i < x.n; ++i)
    for (int r = 0; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c)
        CHECK(x.at(i, 0, r, c) ==
              corpus.items[std::size_t(i)].fp.data(r, c));
  std::vector<double> y = sfp::corpus_labels(corpus);
  REQUIRE(y.size() == corpus.items.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(y[i] == double(corpus.items[i].label));

  CHECK_THROWS_AS(sfp::corpus_batch(corpus, 3, 8), sfp::Error);
  CHECK_THROWS_AS(sfp::corpus_batch(corpus, 2, 4), sfp::Error);
}

TEST_CASE("training is bit-for-bit reproducible") {
  sfp::TrainingSet corpus = tiny_corpus(2, 8);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 1e-3;
  cfg.seed = 4;
  sfp::TrainResult a = sfp::simnet_train(corpus, 2, 8, sfp::toy_widths(), cfg);
  sfp::TrainResult b = sfp::simnet_train(corpus, 2, 8, sfp::toy_widths(), cfg);
  CHECK(params_equal(a.params, b.params));
  CHECK(a.params.epochs_trained == 3);
  REQUIRE(int(a.history.size()) == 3);
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].epoch == int(e));
    CHECK(a.history[e].clean_loss == b.history[e].clean_loss);
    CHECK(std::isfinite(a.history[e].adv_loss));
    CHECK(a.history[e].accuracy >= 0.0);
    CHECK(a.history[e].accuracy <= 1.0);
  }
}

TEST_CASE("learning-rate schedule decays stepwise") {
  sfp::TrainingSet corpus = tiny_corpus(2, 8);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 1e-3;
  cfg.lr_step = 2;
  cfg.lr_gamma = 0.5;
  sfp::TrainResult r = sfp::simnet_train(corpus, 2, 8, sfp::toy_widths(), cfg);
  CHECK(r.history[0].lr == 1e-3);
  CHECK(r.history[1].lr == 1e-3);
  CHECK(r.history[2].lr == 5e-4);
  CHECK(r.history[3].lr == 5e-4);
  CHECK(r.history[4].lr == 2.5e-4);
}

TEST_CASE("zero perturbation makes both passes identical") {
  sfp::TrainingSet corpus = tiny_corpus(2, 8);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.fgsm_epsilon = 0.0;
  sfp::TrainResult r = sfp::simnet_train(corpus, 2, 8, sfp::toy_widths(), cfg);
  for (const auto& st : r.history) CHECK(st.clean_loss == st.adv_loss);
}

TEST_CASE("mini-batching covers the corpus") {
  sfp::TrainingSet corpus = tiny_corpus(2, 8);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;  // corpus size is 8, so the last batch is short
  sfp::TrainResult r = sfp::simnet_train(corpus, 2, 8, sfp::toy_widths(), cfg);
  CHECK(r.params.epochs_trained == 2);
  CHECK(std::isfinite(r.history.back().clean_loss));
}

TEST_CASE("training rejects a single-class corpus") {
  sfp::TrainingSet corpus = tiny_corpus(2, 8);
  for (auto& item : corpus.items) item.label = 1;
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(
      sfp::simnet_train(corpus, 2, 8, sfp::toy_widths(), cfg),
      doctest::Contains("both related and unrelated"), sfp::Error);
}

TEST_CASE("loss validates labels and batch shape") {
  SimNetParams p = sfp::simnet_init(2, 8, sfp::toy_widths(), 3);
  Tensor4 x = random_batch(2, p.input_rows(), p.input_cols(), 1);
  CHECK_THROWS_AS(sfp::simnet_loss(p, x, {1.0}, 0.01, false), sfp::Error);
  CHECK_THROWS_AS(sfp::simnet_loss(p, x, {1.0, 0.5}, 0.01, false), sfp::Error);
  Tensor4 empty(0, 1, p.input_rows(), p.input_cols());
  CHECK_THROWS_AS(sfp::simnet_loss(p, empty, {}, 0.01, false), sfp::Error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  sfp::TrainingSet corpus = tiny_corpus(2, 8);
  TrainConfig cfg;
  cfg.epochs = 2;
  sfp::TrainResult r = sfp::simnet_train(corpus, 2, 8, sfp::toy_widths(), cfg);

  fs::path dir = fs::temp_directory_path() / "sfp-test-simnet";
  fs::remove_all(dir);
  sfp::save_simnet(r.params, dir);
  SimNetParams back = sfp::load_simnet(dir);
  CHECK(params_equal(r.params, back));

  // Scores survive the round-trip exactly.
  sfp::Fingerprint fp = corpus.items[0].fp;
  CHECK(sfp::simnet_score(back, fp) == sfp::simnet_score(r.params, fp));

  SUBCASE("tampered manifest is rejected") {
    sfp::Json man = sfp::read_json_file(dir / "manifest.json");
    man["widths"][0] = 8;
    sfp::write_json_file(dir / "manifest.json", man);
    CHECK_THROWS_AS(sfp::load_simnet(dir), sfp::Error);
  }
  SUBCASE("missing tensor file is rejected") {
    fs::remove(dir / "stem.conv.w.mat");
    CHECK_THROWS_AS(sfp::load_simnet(dir), sfp::Error);
  }
}
