#include <doctest.h>

#include <cmath>
#include <sstream>

#include "remtkd/distill.hpp"
#include "remtkd/pipeline.hpp"

using namespace remtkd;

namespace {

CueNetArch tiny() {
  CueNetArch a;
  a.channels = {4, 8, 16, 32};
  a.d = 16;
  a.eam_channels = 4;
  a.fuse_channels = 8;
  return a;
}

std::vector<SampleRecord> data(int per_type, std::uint64_t seed = 3) {
  DatasetConfig cfg;
  cfg.seed = seed;
  cfg.image_size = 32;
  cfg.counts = {{ForgeryType::authentic, per_type}};
  for (auto t : kTeacherTypes) cfg.counts[t] = per_type;
  return generate_split(cfg);
}

TrainerConfig small_cfg() {
  TrainerConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.update_interval = 8;
  c.feature_dim = 16;
  c.seed = 5;
  return c;
}

const TeacherBundle& bundle() {
  static const TeacherBundle b = [] {
    TeacherBundle tb;
    auto cfg = small_cfg();
    cfg.strategy = Strategy::baseline;
    cfg.epochs = 1;
    const auto train = data(4);
    for (auto t : kTeacherTypes) tb.members.emplace_back(t, pretrain_teacher(t, teacher_subset(train, t), cfg, tiny()));
    return tb;
  }();
  return b;
}

}  // namespace

TEST_SUITE("distill") {
  TEST_CASE("AdamW step") {
    AdamW opt;
    opt.lr = 0.1;
    opt.weight_decay = 0.5;
    std::vector<float> p{1.0f, -2.0f};
    const std::vector<float> g{0.5f, -0.25f};
    opt.step(p, g);
    // First step: m̂ = g and v̂ = g², so the update is lr·sign(g) plus decoupled decay.
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 * 1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(-2.0 - 0.1 * 0.5 * -2.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-6));
    CHECK(opt.steps() == 1);
    CHECK_THROWS_AS(opt.step(p, std::vector<float>(3)), ShapeError);
  }

  TEST_CASE("string conversions") {
    for (auto s : {Strategy::baseline, Strategy::single_teacher, Strategy::u_ensemble, Strategy::redts})
      CHECK(strategy_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(strategy_from_string("ensemble"), ConfigError);
    CHECK(action_mode_from_string("force_all") == ActionMode::force_all);
  }

  TEST_CASE("config validation") {
    auto c = small_cfg();
    c.update_interval = 6;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_cfg();
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_cfg();
    c.update_interval = 0;
    CHECK(c.interval() == 40);
  }

  TEST_CASE("teacher pretraining") {
    const auto train = data(2);
    auto cfg = small_cfg();
    cfg.epochs = 0;
    const auto init = pretrain_teacher(ForgeryType::splicing, teacher_subset(train, ForgeryType::splicing), cfg, tiny());
    const auto again = pretrain_teacher(ForgeryType::splicing, teacher_subset(train, ForgeryType::splicing), cfg, tiny());
    CHECK(init.store == again.store);
    cfg.epochs = 1;
    const auto trained = pretrain_teacher(ForgeryType::splicing, teacher_subset(train, ForgeryType::splicing), cfg, tiny());
    CHECK_FALSE(trained.store == init.store);
    CHECK_THROWS_AS(pretrain_teacher(ForgeryType::splicing, train, cfg, tiny()), ConfigError);
    CHECK_THROWS_AS(pretrain_teacher(ForgeryType::splicing, {}, cfg, tiny()), ConfigError);
    CHECK_THROWS_AS(pretrain_teacher(ForgeryType::authentic, teacher_subset(train, ForgeryType::splicing), cfg, tiny()),
                    ConfigError);
  }

  TEST_CASE("teacher loss falls over the first epochs") {
    const auto train = data(6);
    for (std::uint64_t seed : {1, 2, 3}) {
      auto cfg = small_cfg();
      cfg.seed = seed;
      cfg.epochs = 5;
      TrainLog log;
      pretrain_teacher(ForgeryType::inpainting, teacher_subset(train, ForgeryType::inpainting), cfg, tiny(), &log);
      REQUIRE(log.epochs.size() == 5);
      CHECK(log.epochs.back().hard < log.epochs.front().hard);
    }
  }

  TEST_CASE("policy warmup") {
    const auto train = data(4);
    auto cfg = small_cfg();
    cfg.warmup_windows = 0;
    auto pol = pretrain_policy(bundle(), train, cfg, tiny());
    REQUIRE(pol.size() == 3);
    for (const auto& p : pol) {
      CHECK(p.params.W == std::vector<double>(35, 0.0));
      CHECK(p.params.b == 0.0);
    }
    cfg.warmup_windows = 2;
    cfg.policy_lr = 0.05;
    const auto a = pretrain_policy(bundle(), train, cfg, tiny()), b = pretrain_policy(bundle(), train, cfg, tiny());
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(a[k].teacher == std::string(to_string(kTeacherTypes[k])));
      CHECK(a[k].params.W == b[k].params.W);
      CHECK(a[k].params.b != 0.0);
      for (double w : a[k].params.W) REQUIRE(std::isfinite(w));
    }
    TeacherBundle empty;
    CHECK_THROWS_AS(pretrain_policy(empty, train, cfg, tiny()), ConfigError);
  }

  TEST_CASE("student runs are reproducible and teachers stay frozen") {
    const auto train = data(4);
    auto cfg = small_cfg();
    cfg.policy_lr = 0.05;
    cfg.update_interval = 4;
    std::vector<std::uint64_t> before;
    for (const auto& [t, m] : bundle().members) before.push_back(param_hash(m.store));
    const auto a = train_student(&bundle(), init_policies(bundle(), 16), train, cfg, tiny());
    const auto b = train_student(&bundle(), init_policies(bundle(), 16), train, cfg, tiny());
    CHECK(a.student.store == b.student.store);
    CHECK(a.log.to_jsonl() == b.log.to_jsonl());
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.policies[k].params.W == b.policies[k].params.W);
    for (std::size_t k = 0; k < 3; ++k) CHECK(param_hash(bundle().members[k].second.store) == before[k]);
    // 16 samples, batch 4: 4 batches per epoch, one window per 4 batches.
    CHECK(a.log.batches.size() == 8);
    CHECK(a.log.windows.size() == 2);
    CHECK(a.log.epochs.size() == 2);
  }

  TEST_CASE("omega zero and forced-off selection reduce to the baseline") {
    const auto train = data(4);
    auto base = small_cfg();
    base.strategy = Strategy::baseline;
    const auto ref = train_student(nullptr, {}, train, base, tiny());

    auto none = small_cfg();
    none.action_mode = ActionMode::force_none;
    CHECK(train_student(&bundle(), init_policies(bundle(), 16), train, none, tiny()).student.store == ref.student.store);

    for (auto s : {Strategy::redts, Strategy::u_ensemble, Strategy::single_teacher}) {
      auto c = small_cfg();
      c.strategy = s;
      c.weights.omega = 0;
      const auto r = train_student(&bundle(), init_policies(bundle(), 16), train, c, tiny());
      CHECK(r.student.store == ref.student.store);
    }

    auto on = small_cfg();
    on.strategy = Strategy::u_ensemble;
    CHECK_FALSE(train_student(&bundle(), {}, train, on, tiny()).student.store == ref.student.store);
  }

  TEST_CASE("ensemble of identical teachers matches the single teacher") {
    const auto train = data(4);
    TeacherBundle same;
    for (auto t : kTeacherTypes) same.members.emplace_back(t, bundle().members[1].second);
    auto single = small_cfg();
    single.strategy = Strategy::single_teacher;
    single.single_teacher = ForgeryType::copy_move;
    single.weights.omega_scaling = OmegaScaling::none;
    auto ens = single;
    ens.strategy = Strategy::u_ensemble;
    const auto a = train_student(&same, {}, train, single, tiny());
    const auto b = train_student(&same, {}, train, ens, tiny());
    REQUIRE(a.log.batches.size() == b.log.batches.size());
    for (std::size_t i = 0; i < a.log.batches.size(); ++i)
      CHECK(a.log.batches[i].total == doctest::Approx(b.log.batches[i].total).epsilon(1e-4));
  }

  TEST_CASE("configuration errors") {
    const auto train = data(2);
    auto c = small_cfg();
    CHECK_THROWS_AS(train_student(nullptr, {}, train, c, tiny()), ConfigError);
    auto pol = init_policies(bundle(), 16);
    std::swap(pol[0], pol[1]);
    CHECK_THROWS_AS(train_student(&bundle(), pol, train, c, tiny()), ConfigError);
    c.feature_dim = 32;
    CHECK_THROWS_AS(train_student(&bundle(), init_policies(bundle(), 16), train, c, tiny()), ConfigError);
    CHECK_THROWS_AS(train_student(nullptr, {}, {}, small_cfg(), tiny()), ConfigError);
    TeacherBundle partial;
    partial.members.push_back(bundle().members[0]);
    auto s = small_cfg();
    s.strategy = Strategy::single_teacher;
    s.single_teacher = ForgeryType::inpainting;
    CHECK_THROWS_AS(train_student(&partial, {}, train, s, tiny()), ConfigError);
  }

  TEST_CASE("training log lines") {
    const auto train = data(2);
    const auto r = train_student(&bundle(), init_policies(bundle(), 16), train, small_cfg(), tiny());
    std::istringstream in(r.log.to_jsonl());
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      CHECK(line.front() == '{');
      ++n;
    }
    CHECK(n == int(r.log.batches.size() + r.log.windows.size() + r.log.epochs.size()));
  }
}
