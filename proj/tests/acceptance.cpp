// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. `--only 1,3,6` restricts the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "bandit.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "remtkd/io.hpp"
#include "remtkd/pipeline.hpp"

using namespace remtkd;

namespace {

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> rand_probs(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, 0.01, 0.99);
  return v;
}

std::vector<double> rand_binary(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform01(rng) < uniform01(rng);
  return v;
}

Verdict loss_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = rand_probs(rng, 64), e = rand_probs(rng, 64), t = rand_probs(rng, 64);
    const auto y = rand_binary(rng, 64), ye = rand_binary(rng, 64);
    const std::vector<double> c{uniform01(rng)}, yc{double(uniform01(rng) < 0.5)}, tc{uniform01(rng)};
    track(dice_loss<double>(p, y).value, oracle::dice(p, y));
    track(wbce_loss<double>(p, y).value, oracle::wbce(p, y));
    track(bce_loss<double>(p, y).value, oracle::bce(p, y));
    track(loss_seg<double>(p, y, 0.1).value, oracle::seg(p, y, 0.1));
    track(loss_hard<double>(p, y, c, yc, e, ye, LossWeights{}).hard, oracle::hard(p, y, c, yc, e, ye, 1.0, 0.2, 0.1));
    track(loss_soft<double>(p, c, t, tc, SoftVariant::soft1, 0.1).value, oracle::seg(p, t, 0.1));
    track(loss_soft<double>(p, c, t, tc, SoftVariant::soft2, 0.1).value, oracle::bce(c, tc));
    track(loss_soft<double>(p, c, t, tc, SoftVariant::soft3, 0.1).value, oracle::seg(p, t, 0.1) + oracle::bce(c, tc));
  }
  const double secs = since(t0);
  return {worst <= 1e-6 && secs < 10, fmt("max |impl - oracle| = %.2e over 100 random 8x8 cases, %.2f s", worst, secs)};
}

Verdict gradients() {
  const auto t0 = Clock::now();
  CueNetArch arch;
  arch.channels = {4, 8, 16, 32};
  arch.d = 16;
  arch.eam_channels = 4;
  arch.fuse_channels = 8;
  const auto net = gradcheck::check_network(arch, 16, 24, 99, 1e-5);

  Rng rng(7);
  double worst_pi = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(16), s(16), t(3);
    for (auto& v : r) v = normal(rng, 0, 1);
    for (auto& v : s) v = normal(rng, 0, 1);
    for (auto& v : t) v = uniform01(rng);
    const auto st = state_vector(r, s, t);
    auto p = PolicyParams::zeros(16);
    for (auto& w : p.W) w = normal(rng, 0, 0.2);
    p.b = normal(rng, 0, 0.5);
    const int a = trial % 2;
    const auto g = policy_gradient(st, p, a);
    for (std::size_t i = 0; i <= p.W.size(); ++i) {
      double& x = i < p.W.size() ? p.W[i] : p.b;
      const double orig = x, h = 1e-6;
      x = orig + h;
      const double fp = action_prob(policy_prob(st, p), a);
      x = orig - h;
      const double fm = action_prob(policy_prob(st, p), a);
      x = orig;
      const double num = (fp - fm) / (2 * h), an = i < p.W.size() ? g.dW[i] : g.db;
      worst_pi = std::max(worst_pi, std::abs(num - an) / std::max({std::abs(num), std::abs(an), 1e-3}));
    }
  }
  const double secs = since(t0);
  const bool ok = net.checked >= 20 && net.failed == 0 && worst_pi <= 1e-6 && secs < 120;
  return {ok, fmt("network: %d params, %d over 1e-5, worst rel %.2e; policy: worst rel %.2e; %.1f s", net.checked,
                  net.failed, net.worst_rel, worst_pi, secs)};
}

Verdict bandit_convergence() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string d;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto o = bandit::run(seed, 500, 0.01);
    ok = ok && o.good > 0.9 && o.bad < 0.1;
    d += fmt("%s%.3f/%.3f", seed ? " " : "", o.good, o.bad);
  }
  const double secs = since(t0);
  return {ok && secs < 30, "good/bad selection probability per seed: " + d + fmt(", %.1f s", secs)};
}

Verdict metric_oracle() {
  const auto t0 = Clock::now();
  Rng rng(31);
  double worst = 0;
  bool identity = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = uniform_int(rng, 1, 64);
    std::vector<float> pred(n);
    std::vector<std::uint8_t> mask(n);
    const double dm = uniform01(rng), dp = uniform01(rng);
    for (int i = 0; i < n; ++i) {
      mask[i] = uniform01(rng) < dm;
      pred[i] = float(uniform01(rng) < dp ? uniform(rng, 0.5, 1.0) : uniform(rng, 0.0, 0.49));
    }
    const auto c = oracle::count(pred, mask, 0.5);
    const auto m = pixel_metrics(pred, mask).value();
    const long u = c.tp + c.fp + c.fn;
    const double f1 = u ? 2.0 * c.tp / double(2 * c.tp + c.fp + c.fn) : 1.0, iou = u ? double(c.tp) / u : 1.0;
    worst = std::max({worst, std::abs(m.f1 - f1), std::abs(m.iou - iou)});
    // 2TP/(2TP+FP+FN) and 2·IoU/(1+IoU) = 2TP/(U+TP) are the same rational; compare both
    // in integers and in floating point.
    if (u) identity = identity && 2 * c.tp * (u + c.tp) == 2 * c.tp * (2 * c.tp + c.fp + c.fn);
    identity = identity && std::abs(m.f1 - 2 * m.iou / (1 + m.iou)) <= 1e-15;

    std::vector<double> s(n + 2);
    std::vector<int> y(n + 2);
    for (auto& v : s) v = uniform_int(rng, 0, 9) / 9.0;
    for (auto& v : y) v = uniform01(rng) < 0.5;
    y[0] = 1;
    y[1] = 0;
    worst = std::max(worst, std::abs(auc(s, y) - oracle::pair_auc(s, y)));
  }
  const double secs = since(t0);
  return {worst <= 1e-9 && identity && secs < 10,
          fmt("max |impl - oracle| = %.2e over 1000 cases, F1/IoU identity %s, %.2f s", worst,
              identity ? "holds" : "violated", secs)};
}

Verdict dimensions() {
  bool ok = true;
  std::string d;
  for (int dim : {16, 128}) {
    CueNetArch arch;
    arch.d = dim;
    const CueNet<float> net(arch);
    const auto p = net.init_params(1);
    const ImageTensor img = gen_base_image(1, 64);
    const ImageTensor batch[] = {img};
    const auto r = repr_feature(net, p, batch);
    const auto out = net.run(p, img);
    const auto t = teacher_summary(out);
    const auto st = state_vector(r, r, t);
    const auto pol = PolicyParams::zeros(dim);
    ok = ok && r.size() == std::size_t(dim) && t.size() == 3 && st.size() == std::size_t(2 * dim + 3) &&
         pol.W.size() == st.size() && out.d4.shape[0] == dim;
    d += fmt("%sd=%d: state %zu, summary %zu", dim == 16 ? "" : "; ", dim, st.size(), t.size());
  }
  return {ok, d};
}

Verdict reproducibility() {
  const auto t0 = Clock::now();
  RunConfig cfg;
  cfg.set("train_per_type", "6");
  cfg.set("test_per_type", "2");
  cfg.set("teacher_epochs", "1");
  cfg.set("epochs", "1");
  cfg.set("update_interval", "8");
  cfg.set("seed", "17");
  const auto suite = make_suite(cfg);
  const auto teachers = train_teachers(suite.train, cfg);
  const auto again = train_teachers(suite.train, cfg);
  bool teachers_same = true;
  for (std::size_t k = 0; k < 3; ++k) teachers_same = teachers_same && teachers.members[k].second.store == again.members[k].second.store;

  std::vector<std::uint64_t> hashes;
  for (const auto& [t, m] : teachers.members) hashes.push_back(param_hash(m.store));
  auto tc = cfg.student_trainer();
  tc.policy_lr = 0.01;
  const auto arch = cfg.arch();
  const auto warm = pretrain_policy(teachers, suite.train, tc, arch);
  const auto a = train_student(&teachers, warm, suite.train, tc, arch);
  const auto b = train_student(&teachers, warm, suite.train, tc, arch);
  const bool runs_same = a.student.store == b.student.store && a.log.to_jsonl() == b.log.to_jsonl() &&
                         a.policies[0].params.W == b.policies[0].params.W;

  auto base = tc;
  base.strategy = Strategy::baseline;
  const auto ref = train_student(nullptr, {}, suite.train, base, arch);
  auto zero = tc;
  zero.weights.omega = 0;
  const auto z = train_student(&teachers, warm, suite.train, zero, arch);
  bool traj = z.student.store == ref.student.store && z.log.batches.size() == ref.log.batches.size();
  for (std::size_t i = 0; traj && i < z.log.batches.size(); ++i) traj = z.log.batches[i].hard == ref.log.batches[i].hard;

  bool hash_stable = true;
  for (std::size_t k = 0; k < 3; ++k) hash_stable = hash_stable && param_hash(teachers.members[k].second.store) == hashes[k];

  const auto bytes = io::encode_checkpoint({io::CheckpointKind::model, arch.to_json(), a.student.store, {}});
  const auto back = io::decode_checkpoint(bytes);
  const bool ckpt = back.params == a.student.store && io::encode_checkpoint(back) == bytes;

  const bool ok = teachers_same && runs_same && traj && hash_stable && ckpt;
  return {ok, fmt("repeat runs %s, omega=0 vs baseline %s, teacher hashes %s, checkpoint round trip %s; %.1f s",
                  teachers_same && runs_same ? "identical" : "differ", traj ? "identical" : "differ",
                  hash_stable ? "stable" : "changed", ckpt ? "bit-exact" : "differs", since(t0))};
}

// Criteria 4, 5, 8 (teacher hashes under the full run) and 9 share one experiment.
struct SeedResult {
  double baseline = 0, ensemble = 0, redts = 0;
  double own[3][3] = {};  // [teacher][type] pixel F1
  std::vector<double> jpeg, blur;
  bool hashes_stable = true;
};

const double kJpeg[] = {95, 75, 50};
const double kBlur[] = {0, 1, 2};

SeedResult run_seed(std::uint64_t seed, double* budget_secs) {
  SeedResult r;
  RunConfig cfg;
  cfg.set("seed", std::to_string(seed));
  const auto t0 = Clock::now();
  const auto suite = make_suite(cfg);
  const auto teachers = train_teachers(suite.train, cfg);
  std::vector<std::uint64_t> hashes;
  for (const auto& [t, m] : teachers.members) hashes.push_back(param_hash(m.store));
  const CueNet<float> net(cfg.arch());
  for (std::size_t k = 0; k < 3; ++k) {
    const auto rep = evaluate(net, teachers.members[k].second.store, suite.test);
    for (std::size_t j = 0; j < 3; ++j) r.own[k][j] = rep.per_type.at(kTeacherTypes[j]).pixel_f1;
  }
  const auto rows = run_ablation(suite, teachers, cfg, {"baseline", "u_ensemble", "redts"}, {"reward3"}, {"soft3"},
                                 [&](const std::string& m) { std::fprintf(stderr, "  [seed %llu, %.0f s] %s\n",
                                                                          (unsigned long long)seed, since(t0), m.c_str()); });
  *budget_secs += since(t0);
  for (std::size_t k = 0; k < 3; ++k) r.hashes_stable = r.hashes_stable && param_hash(teachers.members[k].second.store) == hashes[k];
  const AblationRow* student = nullptr;
  for (const auto& row : rows) {
    if (row.strategy == Strategy::baseline) r.baseline = row.average_f1;
    if (row.strategy == Strategy::u_ensemble) r.ensemble = row.average_f1;
    if (row.strategy == Strategy::redts) {
      r.redts = row.average_f1;
      student = &row;
    }
  }
  for (double q : kJpeg)
    r.jpeg.push_back(evaluate(net, student->student, suite.test, PerturbationSpec{PerturbationKind::jpeg, q}).average.pixel_f1);
  for (double s : kBlur)
    r.blur.push_back(
        evaluate(net, student->student, suite.test, PerturbationSpec{PerturbationKind::gaussian_blur, s}).average.pixel_f1);
  return r;
}

int inversions(const std::vector<double>& curve) {
  int n = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) n += curve[i] > curve[i - 1];
  return n;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += fmt("%s%.4f", i ? "," : "", v[i]);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> sel(only.begin(), only.end());
  auto want = [&](int c) { return sel.empty() || sel.contains(c); };

  bool all = true;
  auto report = [&](int id, const char* name, const Verdict& v) {
    all = all && v.pass;
    std::printf("criterion %d %s: %s | %s\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  };

  if (want(1)) report(1, "loss-oracle", loss_oracle());
  if (want(2)) report(2, "gradients", gradients());
  if (want(3)) report(3, "bandit", bandit_convergence());

  Verdict repro;
  const bool big = want(4) || want(5) || want(9);
  std::vector<SeedResult> seeds;
  double budget = 0;
  if (big)
    for (std::uint64_t s = 0; s < 3; ++s) seeds.push_back(run_seed(s, &budget));

  if (want(4)) {
    double b = 0, e = 0, r = 0;
    std::string per;
    for (const auto& s : seeds) {
      b += s.baseline / 3;
      e += s.ensemble / 3;
      r += s.redts / 3;
      per += fmt(" (%.4f/%.4f/%.4f)", s.baseline, s.ensemble, s.redts);
    }
    const bool ok = r >= b + 0.01 && r >= e && budget < 45 * 60;
    report(4, "strategy-trend", {ok, fmt("mean average-F1 baseline %.4f, u_ensemble %.4f, redts %.4f; per seed%s; %.0f s",
                                         b, e, r, per.c_str(), budget)});
  }
  if (want(5)) {
    double m[3][3] = {};
    for (const auto& s : seeds)
      for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 3; ++j) m[k][j] += s.own[k][j] / 3;
    int wins = 0;
    std::string d;
    for (int j = 0; j < 3; ++j) {
      bool win = true;
      for (int k = 0; k < 3; ++k) win = win && m[j][j] >= m[k][j];
      wins += win;
      d += fmt("%s%s: own %.3f vs others %.3f/%.3f", j ? "; " : "", std::string(to_string(kTeacherTypes[j])).c_str(),
               m[j][j], m[(j + 1) % 3][j], m[(j + 2) % 3][j]);
    }
    report(5, "teacher-specialization", {wins >= 2, fmt("%d/3 types; ", wins) + d});
  }
  if (want(6)) report(6, "metric-oracle", metric_oracle());
  if (want(7)) report(7, "dimensions", dimensions());
  if (want(8)) {
    auto v = reproducibility();
    if (big) {
      bool stable = true;
      for (const auto& s : seeds) stable = stable && s.hashes_stable;
      v.pass = v.pass && stable;
      v.detail += stable ? "; teacher hashes stable through full runs" : "; teacher hash changed in a full run";
    }
    report(8, "reproducibility", v);
  }
  if (want(9)) {
    std::vector<double> jpeg(3, 0.0), blur(3, 0.0);
    for (const auto& s : seeds)
      for (int i = 0; i < 3; ++i) {
        jpeg[i] += s.jpeg[i] / 3;
        blur[i] += s.blur[i] / 3;
      }
    const bool ok = inversions(jpeg) <= 1 && inversions(blur) <= 1;
    report(9, "robustness", {ok, "pixel F1 jpeg 95,75,50: " + join(jpeg) + " (" + std::to_string(inversions(jpeg)) +
                                     " inversions); blur 0,1,2: " + join(blur) + " (" +
                                     std::to_string(inversions(blur)) + " inversions)"});
  }
  return all ? 0 : 1;
}
