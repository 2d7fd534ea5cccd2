#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "occtip/checkpoint.hpp"
#include "occtip/dataset.hpp"
#include "occtip/error.hpp"
#include "occtip/evaluate.hpp"
#include "occtip/gradcheck.hpp"
#include "occtip/optim.hpp"
#include "occtip/trainer.hpp"

using namespace occtip;
using namespace occtip::train;

namespace {

const dataset::Dataset& toy_data() {
  static const dataset::Dataset data = [] {
    dataset::GenConfig cfg;
    cfg.resolution = 64;
    cfg.points = 512;
    cfg.visibility_samples = 100;
    cfg.fixtures.clip_dim = 16;
    return dataset::generate(meshgen::toy_shapes(2), cfg);
  }();
  return data;
}

duomamba::EncoderConfig small_encoder() {
  duomamba::EncoderConfig c;
  c.l_blocks = 1;
  c.c_dim = 16;
  c.s_tokens = 16;
  c.k_neighbors = 8;
  c.n_state = 4;
  c.embed_dim = 16;
  return c;
}

TrainConfig short_run(int epochs = 1) {
  TrainConfig t;
  t.epochs = epochs;
  t.warmup_epochs = std::min(epochs, 1);
  t.base_lr = 2e-3;
  t.seed = 3;
  return t;
}

std::vector<std::uint8_t> snapshot(Trainer& t) { return store::write_container(make_checkpoint(t)); }

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("gradients of every operation") {
  for (auto op : all_grad_ops()) {
    for (std::uint64_t seed : {1, 2}) {
      const auto r = grad_check(op, seed);
      INFO(to_string(op) << " seed " << seed << " worst " << r.worst_tensor);
      CHECK(r.max_rel_error <= 1e-4);
      CHECK(r.entries_checked > 0);
      if (op == GradOp::Affine) CHECK(r.max_rel_error <= 1e-7);
    }
  }
  CHECK(grad_op_from_string("s6") == GradOp::S6);
  CHECK_THROWS_AS(grad_op_from_string("softmax"), Error);
}

TEST_CASE("learning-rate schedule endpoints") {
  CHECK(lr_at(0, 100, 500, 7e-4) == 0.0);
  CHECK(lr_at(100, 100, 500, 7e-4) == doctest::Approx(7e-4).epsilon(1e-15));
  CHECK(lr_at(50, 100, 500, 7e-4) == doctest::Approx(3.5e-4).epsilon(1e-15));
  CHECK(std::abs(lr_at(500, 100, 500, 7e-4)) <= 1e-12);
  CHECK(lr_at(300, 100, 500, 7e-4) == doctest::Approx(3.5e-4).epsilon(1e-12));
  for (long s = 101; s < 500; ++s) CHECK(lr_at(s, 100, 500, 1.0) <= lr_at(s - 1, 100, 500, 1.0));
}

TEST_CASE("adamw decay is decoupled") {
  Param w(2, 3), b(1, 3);
  w.value.setConstant(2.0);
  b.value.setConstant(2.0);
  ParamList params = {{"w", &w, true}, {"b", &b, false}};
  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.05});
  const double lr = 0.01;
  for (int i = 0; i < 5; ++i) {
    const Mat before = w.value;
    opt.step(params, lr);
    CHECK(w.value == before - lr * 0.05 * before);
  }
  CHECK((b.value.array() == 2.0).all());

  // with a gradient and no decay the first step moves each entry by ~lr
  Param p(1, 2);
  p.grad << 3.0, -0.5;
  ParamList one = {{"p", &p, true}};
  AdamW plain(AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  plain.step(one, 0.1);
  CHECK(p.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.value(0, 1) == doctest::Approx(0.1).epsilon(1e-6));
  p.grad(0, 0) = std::nan("");
  CHECK_THROWS_AS(plain.step(one, 0.1), NumericalError);
}

TEST_CASE("ema approaches constant parameters geometrically") {
  Param p(1, 4);
  p.value.setConstant(1.0);
  ParamList params = {{"p", &p, false}};
  Ema ema(0.9995, false);
  ema.reset(params);
  ema.shadow[0].setZero();
  for (int n = 1; n <= 200; ++n) {
    ema.update(params);
    const double gap = 1.0 - ema.shadow[0](0, 0);
    CHECK(gap == doctest::Approx(std::pow(0.9995, n)).epsilon(1e-10));
  }
  Ema warm(0.9995, true);
  CHECK(warm.decay_at(0) == doctest::Approx(0.1));
  CHECK(warm.decay_at(100000) == 0.9995);
}

TEST_CASE("trainer schedule") {
  Trainer t(toy_data(), small_encoder(), short_run(50));
  // 10 training views per object, 16 objects in one batch
  CHECK(t.steps_per_epoch() == 10);
  CHECK(t.total_steps() == 500);
  for (const auto& held : t.split().held_views) CHECK(held.size() == 2);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  auto cfg = short_run(1);
  cfg.base_lr = 0.0;
  Trainer t(toy_data(), small_encoder(), cfg);
  std::vector<Mat> before;
  for (const auto& p : t.model().parameters()) before.push_back(p.param->value);
  for (int i = 0; i < 3; ++i) t.step();
  const auto after = t.model().parameters();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].param->value == before[i]);
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(t.ema.shadow[i] == before[i]);
  CHECK(t.ema.updates == 3);
}

TEST_CASE("identical config and seed give identical checkpoints") {
  Trainer a(toy_data(), small_encoder(), short_run(1)), b(toy_data(), small_encoder(), short_run(1));
  std::vector<double> la, lb;
  a.run([&](const StepMetrics& m) { la.push_back(m.terms.total()); });
  b.run([&](const StepMetrics& m) { lb.push_back(m.terms.total()); });
  CHECK(la == lb);
  CHECK(snapshot(a) == snapshot(b));
  auto other = short_run(1);
  other.seed = 4;
  Trainer c(toy_data(), small_encoder(), other);
  c.run();
  CHECK(snapshot(c) != snapshot(a));
}

TEST_CASE("zero epochs checkpoint is the initialization") {
  auto cfg = short_run(0);
  Trainer t(toy_data(), small_encoder(), cfg);
  CHECK(t.done());
  t.run();
  const auto ckpt = make_checkpoint(t);
  Model fresh(small_encoder());
  fresh.init(cfg.seed);
  Model loaded = load_model(ckpt, false);
  auto fp = fresh.parameters();
  auto lp = loaded.parameters();
  REQUIRE(fp.size() == lp.size());
  for (std::size_t i = 0; i < fp.size(); ++i) CHECK(fp[i].param->value == lp[i].param->value);
}

TEST_CASE("resume continues the same trajectory") {
  const auto cfg = short_run(2);
  Trainer straight(toy_data(), small_encoder(), cfg);
  straight.run();

  Trainer first(toy_data(), small_encoder(), cfg);
  for (int i = 0; i < 7; ++i) first.step();
  const auto bytes = snapshot(first);
  const auto ckpt = store::read_container(bytes);
  CHECK(checkpoint_train_config(ckpt).seed == cfg.seed);
  Trainer resumed(toy_data(), checkpoint_encoder_config(ckpt), checkpoint_train_config(ckpt));
  restore_checkpoint(resumed, ckpt);
  CHECK(resumed.step_count() == 7);
  CHECK(snapshot(resumed) == bytes);
  resumed.run();
  CHECK(resumed.step_count() == straight.step_count());
  CHECK(snapshot(resumed) == snapshot(straight));
}

TEST_CASE("loss trends down over 500 steps") {
  Trainer t(toy_data(), small_encoder(), short_run(50));
  std::vector<double> losses;
  t.run([&](const StepMetrics& m) {
    CHECK(std::isfinite(m.terms.total()));
    losses.push_back(m.terms.total());
  });
  REQUIRE(losses.size() == 500);
  const std::vector<double> head(losses.begin(), losses.begin() + 50), tail(losses.end() - 50, losses.end());
  CHECK(median(tail) < median(head));
}

TEST_CASE("config validation and json") {
  TrainConfig c;
  c.warmup_epochs = 60;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.color_drop_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  const auto j = TrainConfig{}.to_json();
  CHECK(TrainConfig::from_json(j).to_json() == j);
  CHECK_THROWS_AS(TrainConfig::from_json(store::json{{"learning_rate", 1}}), Error);
  CHECK_THROWS_AS(TrainConfig::from_json(store::json{{"color_constant", 0.5}}), Error);
  const auto enc = duomamba::EncoderConfig::paper();
  CHECK(to_json(encoder_config_from_json(to_json(enc), {})) == to_json(enc));

  auto wrong = small_encoder();
  wrong.embed_dim = 12;
  CHECK_THROWS_AS(Trainer(toy_data(), wrong, short_run(1)), Error);
}

TEST_CASE("zero-shot ranking") {
  Vec z(3);
  z << 0.1, 0.2, 0.3;
  CHECK(rank_classes(z, Mat::Ones(1, 3)) == std::vector<int>{0});
  const Mat axes = Mat::Identity(4, 4);
  for (int j = 0; j < 4; ++j) CHECK(rank_classes(axes.row(j).transpose(), axes).front() == j);
  CHECK_THROWS_AS(rank_classes(z, Mat(0, 3)), Error);
}

TEST_CASE("single class gives perfect top-1") {
  const auto& data = toy_data();
  dataset::Dataset one = data;
  one.class_names = {"thing"};
  one.class_text = data.class_text.topRows(1);
  for (auto& o : one.objects) o.class_id = 0;
  Model m(small_encoder());
  m.init(0);
  std::vector<std::size_t> recs = {0, 13, 40, 77};
  CHECK(evaluate_zero_shot(m, one, recs).top1 == 1.0);
}

TEST_CASE("untrained model is near chance") {
  const auto& data = toy_data();
  Model m(small_encoder());
  m.init(5);
  std::vector<std::size_t> recs(data.records.size());
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i] = i;
  const auto r = evaluate_zero_shot(m, data, recs);
  CHECK(r.samples == 192);
  CHECK(std::abs(r.top1 - 1.0 / 8) <= 0.10);
}

TEST_CASE("linear probe") {
  Rng rng(7);
  std::normal_distribution<double> g(0, 1);
  SUBCASE("separable classes") {
    Mat x(40, 2);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
      y[static_cast<std::size_t>(i)] = i % 2;
      x(i, 0) = (i % 2 ? 3.0 : -3.0) + 0.3 * g(rng);
      x(i, 1) = g(rng);
    }
    CHECK(linear_probe_train_accuracy(x, y, 2) == 1.0);
  }
  SUBCASE("shuffled labels sit at chance") {
    const int K = 4, n = 400;
    Mat train(n, 8), test(n, 8);
    std::vector<int> ytr(n), yte(n);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < 8; ++d) {
        train(i, d) = g(rng);
        test(i, d) = g(rng);
      }
      ytr[static_cast<std::size_t>(i)] = i % K;
      yte[static_cast<std::size_t>(i)] = i % K;
    }
    std::shuffle(ytr.begin(), ytr.end(), rng);
    CHECK(std::abs(linear_probe(train, ytr, test, yte, K) - 1.0 / K) <= 0.10);
  }
  SUBCASE("missing class") {
    CHECK_THROWS_AS(linear_probe(Mat::Ones(2, 2), {0, 0}, Mat::Ones(1, 2), {1}, 2), Error);
  }
  SUBCASE("more shots help on the toy set") {
    const auto& data = toy_data();
    Mat feats(static_cast<Eigen::Index>(data.records.size()), data.clip_dim());
    std::vector<int> labels;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      // perturb the fixture image features so one shot is not enough
      Vec f = data.records[i].image_feature;
      for (Eigen::Index d = 0; d < f.size(); ++d) f(d) += 0.6 * g(rng) / std::sqrt(static_cast<double>(f.size()));
      feats.row(static_cast<Eigen::Index>(i)) = f.transpose();
      labels.push_back(data.label_of(data.records[i]));
    }
    double one = 0, sixteen = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = few_shot_probe(feats, labels, feats, labels, 8, {1, 16}, seed);
      one += r.accuracy[0];
      sixteen += r.accuracy[1];
    }
    CHECK(sixteen >= one);
  }
}
