#include "remtkd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>

#include <json.hpp>

namespace remtkd {

void AdamW::step(std::span<float> params, std::span<const float> grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: parameter and gradient sizes differ");
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (m_.size() != params.size()) throw ShapeError("optimizer state does not match the parameter buffer");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, double(t_));
  const double bc2 = 1.0 - std::pow(beta2, double(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = beta1 * m_[i] + (1 - beta1) * g;
    v_[i] = beta2 * v_[i] + (1 - beta2) * g * g;
    double p = params[i];
    p -= lr * weight_decay * p;
    p -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps);
    params[i] = static_cast<float>(p);
  }
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::baseline: return "baseline";
    case Strategy::single_teacher: return "single_teacher";
    case Strategy::u_ensemble: return "u_ensemble";
    case Strategy::redts: return "redts";
  }
  return "?";
}

Strategy strategy_from_string(std::string_view s) {
  for (auto v : {Strategy::baseline, Strategy::single_teacher, Strategy::u_ensemble, Strategy::redts})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown strategy: " + std::string(s));
}

std::string_view to_string(ActionMode m) {
  switch (m) {
    case ActionMode::sampled: return "sampled";
    case ActionMode::force_all: return "force_all";
    case ActionMode::force_none: return "force_none";
  }
  return "?";
}

ActionMode action_mode_from_string(std::string_view s) {
  for (auto v : {ActionMode::sampled, ActionMode::force_all, ActionMode::force_none})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown action mode: " + std::string(s));
}

void TrainerConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (update_interval < 0 || (update_interval > 0 && update_interval % batch_size != 0))
    throw ConfigError("update_interval must be a positive multiple of batch_size");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (!(policy_lr >= 0)) throw ConfigError("policy_lr must be >= 0");
  if (warmup_windows < 0) throw ConfigError("warmup_windows must be >= 0");
  if (strategy == Strategy::single_teacher && single_teacher == ForgeryType::authentic)
    throw ConfigError("single_teacher must name a tamper type");
  reward.validate();
  weights.validate();
}

void TeacherBundle::validate() const {
  std::set<ForgeryType> seen;
  for (const auto& [t, m] : members) {
    if (t == ForgeryType::authentic || t == ForgeryType::multi) throw ConfigError("teachers must be single-type");
    if (!seen.insert(t).second) throw ConfigError("duplicate teacher type: " + std::string(to_string(t)));
    CueNet<float>(m.arch).validate(m.store);
  }
}

bool TeacherBundle::contains(ForgeryType t) const {
  return std::any_of(members.begin(), members.end(), [&](const auto& m) { return m.first == t; });
}

const ModelParams& TeacherBundle::get(ForgeryType t) const {
  for (const auto& m : members)
    if (m.first == t) return m.second;
  throw ConfigError("missing teacher: " + std::string(to_string(t)));
}

std::string TrainLog::to_jsonl() const {
  using oj = nlohmann::ordered_json;
  std::string out;
  for (const auto& e : epochs)
    out += oj{{"kind", "epoch"}, {"epoch", e.epoch}, {"hard", e.hard}, {"soft", e.soft}, {"total", e.total}}.dump() + "\n";
  for (const auto& b : batches)
    out += oj{{"kind", "batch"}, {"epoch", b.epoch}, {"batch", b.batch},   {"seg", b.seg},
              {"cls", b.cls},    {"edg", b.edg},     {"hard", b.hard},     {"soft", b.soft},
              {"total", b.total}, {"actions", b.actions}, {"probs", b.probs}}
               .dump() +
           "\n";
  for (const auto& w : windows)
    out += oj{{"kind", "window"}, {"window", w.window}, {"batches", w.batches}, {"hard", w.hard},
              {"soft", w.soft},   {"f1", w.f1},         {"acc", w.acc},         {"reward", w.reward},
              {"xi", w.xi},       {"mean_prob", w.mean_prob}}
               .dump() +
           "\n";
  return out;
}

namespace {

struct Prepared {
  std::vector<Tensor<float>> images;
  std::vector<std::vector<float>> masks, edges;
  std::vector<float> labels;
};

Prepared prepare(std::span<const SampleRecord> data) {
  Prepared p;
  for (const auto& s : data) {
    p.images.push_back(to_chw<float>(s.image));
    p.masks.push_back(mask_to_vector<float>(s.mask));
    p.edges.push_back(mask_to_vector<float>(s.edge.map));
    p.labels.push_back(static_cast<float>(s.label));
  }
  return p;
}

// Frozen teacher outputs for every training image.
struct TeacherCache {
  std::string name;
  std::vector<std::vector<float>> seg;
  std::vector<float> cls;
  std::vector<std::array<double, 3>> summary;
};

TeacherCache cache_teacher(ForgeryType type, const ModelParams& m, const Prepared& data) {
  const CueNet<float> net(m.arch);
  TeacherCache c;
  c.name = std::string(to_string(type));
  for (const auto& img : data.images) {
    auto o = net.run(m.store, img);
    const auto s = teacher_summary(o);
    c.summary.push_back({s[0], s[1], s[2]});
    c.seg.push_back(std::move(o.seg.data));
    c.cls.push_back(o.cls);
  }
  return c;
}

// Element `op` of the dihedral group acting on {C,H,W} maps: bit 2 flips rows,
// bit 1 flips columns, bit 0 transposes (square maps only).
template <class V>
void dihedral(const V& src, V& dst, int c, int h, int w, int op) {
  dst.resize(src.size());
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int sy = y, sx = x;
        if (op & 1) std::swap(sy, sx);
        if (op & 2) sx = w - 1 - sx;
        if (op & 4) sy = h - 1 - sy;
        dst[ci * hw + static_cast<std::size_t>(y) * w + x] = src[ci * hw + static_cast<std::size_t>(sy) * w + sx];
      }
}

struct RunSpec {
  const Prepared* data = nullptr;
  ParamStore<float> student;
  const std::vector<TeacherCache>* teachers = nullptr;
  std::vector<TeacherPolicy>* policies = nullptr;
  const std::vector<std::vector<double>>* reference = nullptr;  // pooled D4 of the frozen reference
  int epochs = 0;
  int max_windows = -1;  // stop after this many windows (policy warmup)
  bool update_policies = false;
  ActionMode action_mode = ActionMode::sampled;
  std::optional<std::size_t> single;  // index into teachers
  bool ensemble = false;
};

double cosine_xi(double xi0, int window, int total) {
  if (total <= 1) return xi0;
  return 0.5 * xi0 * (1.0 + std::cos(std::numbers::pi * double(window) / double(total)));
}

// Shared training loop for every stage. Returns the trained parameters.
ParamStore<float> run(RunSpec& spec, const TrainerConfig& cfg, const CueNetArch& arch, TrainLog* log) {
  const CueNet<float> net(arch);
  const Prepared& data = *spec.data;
  const std::size_t n = data.images.size();
  const int B = cfg.batch_size;
  const int batches_per_epoch = static_cast<int>((n + B - 1) / B);
  const bool use_policies = spec.policies != nullptr && !spec.policies->empty();
  const int interval = cfg.interval();
  int total_windows = 0;
  if (use_policies) {
    total_windows = (spec.epochs * batches_per_epoch + interval - 1) / interval;
    if (spec.max_windows >= 0) total_windows = std::min(total_windows, spec.max_windows);
  }

  AdamW opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  Rng order_rng(derive_seed(cfg.seed, "data-order"));
  Rng action_rng(derive_seed(cfg.seed, "actions"));
  Rng augment_rng(derive_seed(cfg.seed, "augment"));

  std::vector<std::size_t> order(n);
  std::vector<float> grads(spec.student.num_values());
  EpisodeHistory history(interval);
  WindowLog win;
  std::vector<double> reward_hist;
  int window_index = 0, global_batch = 0;
  bool stop = false;

  auto close_window = [&] {
    if (!use_policies || win.batches == 0) return;
    win.window = window_index;
    win.hard /= win.batches;
    win.soft /= win.batches;
    win.f1 /= win.batches;
    win.acc /= win.batches;
    for (auto& [k, v] : win.mean_prob) v /= win.batches;
    win.reward = compute_reward(cfg.reward, win.hard, win.soft, win.f1, win.acc);
    double r = win.reward;
    if (cfg.reward_baseline && !reward_hist.empty())
      r -= std::accumulate(reward_hist.begin(), reward_hist.end(), 0.0) / double(reward_hist.size());
    reward_hist.push_back(win.reward);
    win.xi = cosine_xi(cfg.policy_lr, window_index, total_windows);
    if (spec.update_policies && !history.empty()) policy_update(history, r, win.xi, *spec.policies, cfg.policy_form);
    history.clear();
    if (log) log->windows.push_back(win);
    win = WindowLog{};
    ++window_index;
    if (spec.max_windows >= 0 && window_index >= spec.max_windows) stop = true;
  };

  for (int epoch = 0; epoch < spec.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochLog elog{epoch, 0, 0, 0};
    int ebatches = 0;
    for (int bi = 0; bi < batches_per_epoch && !stop; ++bi) {
      const std::size_t lo = static_cast<std::size_t>(bi) * B, hi = std::min(n, lo + B);
      const std::size_t bs = hi - lo;
      const std::size_t hw = data.masks[order[lo]].size();

      ag::Tape<float> tape(true);
      const auto bound = net.bind(tape, spec.student);
      std::vector<OutputNodes> nodes;
      std::vector<float> seg, seg_t, cls, cls_t, edge, edge_t;
      std::vector<double> s_feat(arch.d, 0.0), r_feat(arch.d, 0.0);
      std::vector<int> ops(bs, 0);
      for (std::size_t j = lo; j < hi; ++j) {
        const std::size_t idx = order[j];
        const auto& src = data.images[idx];
        const int ih = src.height(), iw = src.width();
        int op = 0;
        if (cfg.augment) op = ih == iw ? uniform_int(augment_rng, 0, 7) : 2 * uniform_int(augment_rng, 0, 3);
        ops[j - lo] = op;
        int img;
        std::vector<float> m = data.masks[idx], e = data.edges[idx];
        if (op) {
          Tensor<float> aug(src.shape);
          dihedral(src.data, aug.data, 3, ih, iw, op);
          img = tape.constant(std::move(aug));
          dihedral(data.masks[idx], m, 1, ih, iw, op);
          dihedral(data.edges[idx], e, 1, ih, iw, op);
        } else {
          img = tape.constant(src);
        }
        nodes.push_back(net.forward(tape, bound, img));
        const auto& o = nodes.back();
        const auto& sv = tape.value(o.seg).data;
        seg.insert(seg.end(), sv.begin(), sv.end());
        seg_t.insert(seg_t.end(), m.begin(), m.end());
        cls.push_back(tape.value(o.cls).data[0]);
        cls_t.push_back(data.labels[idx]);
        const auto& ev = tape.value(o.edge).data;
        edge.insert(edge.end(), ev.begin(), ev.end());
        edge_t.insert(edge_t.end(), e.begin(), e.end());
        if (use_policies) {
          const auto f = pooled_d4(tape.value(o.d4));
          for (int c = 0; c < arch.d; ++c) {
            s_feat[c] += f[c] / double(bs);
            r_feat[c] += (*spec.reference)[idx][c] / double(bs);
          }
        }
      }

      auto hard = loss_hard<float>(seg, seg_t, cls, cls_t, edge, edge_t, cfg.weights);
      std::vector<float> g_seg = std::move(hard.grad_seg), g_cls = std::move(hard.grad_cls),
                         g_edge = std::move(hard.grad_edge);

      BatchLog blog;
      blog.epoch = epoch;
      blog.batch = global_batch;
      blog.seg = hard.seg;
      blog.cls = hard.cls;
      blog.edg = hard.edg;
      blog.hard = hard.hard;

      // Select teachers and gather soft targets.
      std::vector<std::size_t> selected;
      if (spec.teachers) {
        const auto& T = *spec.teachers;
        if (use_policies) {
          for (std::size_t k = 0; k < T.size(); ++k) {
            std::vector<double> t_feat(3, 0.0);
            for (std::size_t j = lo; j < hi; ++j)
              for (int c = 0; c < 3; ++c) t_feat[c] += T[k].summary[order[j]][c] / double(bs);
            auto state = state_vector(r_feat, s_feat, t_feat);
            const double p = policy_prob(state, (*spec.policies)[k].params);
            ActionSample a;
            switch (spec.action_mode) {
              case ActionMode::sampled: a = sample_action(p, action_rng); break;
              case ActionMode::force_all: a = {1, p}; break;
              case ActionMode::force_none: a = {0, p}; break;
            }
            if (a.action) selected.push_back(k);
            blog.actions[T[k].name] = a.action;
            blog.probs[T[k].name] = p;
            win.mean_prob[T[k].name] += p;
            history.push({global_batch, k, std::move(state), a});
          }
        } else if (spec.single) {
          selected.push_back(*spec.single);
        } else if (spec.ensemble) {
          for (std::size_t k = 0; k < T.size(); ++k) selected.push_back(k);
        }
      }

      double soft_sum = 0;
      const double omega_eff = cfg.weights.effective_omega(selected.size());
      if (!selected.empty()) {
        const auto& T = *spec.teachers;
        auto targets = [&](const std::vector<std::size_t>& ks) {
          std::vector<float> ts(bs * hw, 0.f), tc(bs, 0.f);
          const float inv = 1.f / static_cast<float>(ks.size());
          std::vector<float> tmp;
          for (std::size_t k : ks)
            for (std::size_t j = 0; j < bs; ++j) {
              const std::size_t idx = order[lo + j];
              const std::vector<float>* tseg = &T[k].seg[idx];
              if (ops[j]) {
                const auto& shp = data.images[idx].shape;
                dihedral(T[k].seg[idx], tmp, 1, shp[1], shp[2], ops[j]);
                tseg = &tmp;
              }
              for (std::size_t i = 0; i < hw; ++i) ts[j * hw + i] += (*tseg)[i] * (ks.size() > 1 ? inv : 1.f);
              tc[j] += T[k].cls[idx] * (ks.size() > 1 ? inv : 1.f);
            }
          return std::pair{std::move(ts), std::move(tc)};
        };
        // The ensemble distills once from the averaged target; other strategies sum per teacher.
        std::vector<std::vector<std::size_t>> groups;
        if (spec.ensemble)
          groups.push_back(selected);
        else
          for (auto k : selected) groups.push_back({k});
        for (const auto& g : groups) {
          const auto [ts, tc] = targets(g);
          auto soft = loss_soft<float>(seg, cls, ts, tc, cfg.soft_variant, static_cast<float>(cfg.weights.lambda0_s));
          soft_sum += soft.value;
          if (omega_eff != 0) {
            const float w = static_cast<float>(omega_eff);
            for (std::size_t i = 0; i < g_seg.size(); ++i) g_seg[i] += w * soft.grad_seg[i];
            for (std::size_t i = 0; i < g_cls.size(); ++i) g_cls[i] += w * soft.grad_cls[i];
          }
        }
      }
      blog.soft = soft_sum;
      blog.total = hard.hard + omega_eff * soft_sum;

      for (std::size_t j = 0; j < bs; ++j) {
        tape.seed(nodes[j].seg, std::span<const float>(g_seg).subspan(j * hw, hw));
        tape.seed(nodes[j].edge, std::span<const float>(g_edge).subspan(j * hw, hw));
        tape.seed(nodes[j].cls, std::span<const float>(g_cls).subspan(j, 1));
      }
      std::fill(grads.begin(), grads.end(), 0.f);
      tape.backward(grads);
      opt.step(spec.student.values(), grads);

      if (use_policies) {
        win.batches++;
        win.hard += hard.hard;
        win.soft += soft_sum;
        double f1 = 0, acc = 0;
        for (std::size_t j = 0; j < bs; ++j) {
          std::size_t tp = 0, fp = 0, fn = 0;
          for (std::size_t i = 0; i < hw; ++i) {
            const bool p = seg[j * hw + i] >= 0.5f, y = seg_t[j * hw + i] >= 0.5f;
            tp += p && y;
            fp += p && !y;
            fn += !p && y;
          }
          f1 += (tp + fp + fn) == 0 ? 1.0 : 2.0 * tp / double(2 * tp + fp + fn);
          acc += (cls[j] >= 0.5f) == (cls_t[j] >= 0.5f);
        }
        win.f1 += f1 / double(bs);
        win.acc += acc / double(bs);
      }

      elog.hard += hard.hard;
      elog.soft += soft_sum;
      elog.total += blog.total;
      ++ebatches;
      if (log) log->batches.push_back(std::move(blog));
      ++global_batch;
      if (use_policies && win.batches >= interval) close_window();
    }
    if (ebatches) {
      elog.hard /= ebatches;
      elog.soft /= ebatches;
      elog.total /= ebatches;
      if (log) log->epochs.push_back(elog);
    }
  }
  if (!stop) close_window();
  return std::move(spec.student);
}

std::vector<std::vector<double>> reference_features(const TrainerConfig& cfg, const CueNetArch& arch,
                                                    const Prepared& data) {
  const CueNet<float> net(arch);
  const auto ref = net.init_params(derive_seed(cfg.seed, "reference"));
  std::vector<std::vector<double>> out;
  out.reserve(data.images.size());
  for (const auto& img : data.images) out.push_back(pooled_d4(net.run(ref, img).d4));
  return out;
}

std::vector<TeacherCache> cache_all(const TeacherBundle& teachers, const Prepared& data) {
  std::vector<TeacherCache> out;
  for (const auto& [t, m] : teachers.members) out.push_back(cache_teacher(t, m, data));
  return out;
}

void check_policies(const std::vector<TeacherPolicy>& policies, const TeacherBundle& teachers, int d) {
  if (policies.size() != teachers.members.size()) throw ConfigError("one policy per teacher is required");
  for (std::size_t k = 0; k < policies.size(); ++k) {
    if (policies[k].teacher != to_string(teachers.members[k].first))
      throw ConfigError("policy order does not match the teacher bundle");
    if (policies[k].params.W.size() != 2 * static_cast<std::size_t>(d) + 3)
      throw ShapeError("policy length does not match 2d+3 for d=" + std::to_string(d));
  }
}

}  // namespace

ModelParams pretrain_teacher(ForgeryType type, std::span<const SampleRecord> data, const TrainerConfig& cfg,
                             const CueNetArch& arch, TrainLog* log) {
  cfg.validate();
  if (type == ForgeryType::authentic || type == ForgeryType::multi)
    throw ConfigError("teachers are trained for a single tamper type");
  if (data.empty()) throw ConfigError("empty teacher dataset");
  for (const auto& s : data)
    if (s.forgery_type != ForgeryType::authentic && s.forgery_type != type)
      throw ConfigError("teacher dataset for " + std::string(to_string(type)) + " contains " +
                        std::string(to_string(s.forgery_type)) + " sample " + s.id);
  const CueNet<float> net(arch);
  const Prepared prepared = prepare(data);
  RunSpec spec;
  spec.data = &prepared;
  spec.student = net.init_params(derive_seed(cfg.seed, "init-" + std::string(to_string(type))));
  spec.epochs = cfg.epochs;
  return {arch, run(spec, cfg, arch, log)};
}

std::vector<TeacherPolicy> init_policies(const TeacherBundle& teachers, int feature_dim) {
  std::vector<TeacherPolicy> out;
  for (const auto& [t, m] : teachers.members) out.push_back({std::string(to_string(t)), PolicyParams::zeros(feature_dim)});
  return out;
}

std::vector<TeacherPolicy> pretrain_policy(const TeacherBundle& teachers, std::span<const SampleRecord> data,
                                           const TrainerConfig& cfg, const CueNetArch& arch, TrainLog* log) {
  cfg.validate();
  teachers.validate();
  if (teachers.members.empty()) throw ConfigError("missing teacher: policy pretraining needs teachers");
  if (cfg.feature_dim != arch.d) throw ConfigError("feature_dim does not match the model descriptor");
  auto policies = init_policies(teachers, cfg.feature_dim);
  if (cfg.warmup_windows == 0 || data.empty()) return policies;
  const Prepared prepared = prepare(data);
  const auto caches = cache_all(teachers, prepared);
  const auto reference = reference_features(cfg, arch, prepared);
  const int bpe = static_cast<int>((prepared.images.size() + cfg.batch_size - 1) / cfg.batch_size);
  RunSpec spec;
  spec.data = &prepared;
  spec.student = CueNet<float>(arch).init_params(derive_seed(cfg.seed, "init"));
  spec.teachers = &caches;
  spec.policies = &policies;
  spec.reference = &reference;
  spec.max_windows = cfg.warmup_windows;
  spec.epochs = (cfg.warmup_windows * cfg.interval() + bpe - 1) / bpe;
  spec.update_policies = true;
  spec.action_mode = ActionMode::force_all;
  run(spec, cfg, arch, log);
  return policies;
}

TrainResult train_student(const TeacherBundle* teachers, std::vector<TeacherPolicy> policies,
                          std::span<const SampleRecord> data, const TrainerConfig& cfg, const CueNetArch& arch) {
  cfg.validate();
  if (data.empty()) throw ConfigError("empty training dataset");
  if (cfg.feature_dim != arch.d) throw ConfigError("feature_dim does not match the model descriptor");
  const bool needs_teachers = cfg.strategy != Strategy::baseline;
  if (needs_teachers) {
    if (!teachers || teachers->members.empty())
      throw ConfigError("strategy " + std::string(to_string(cfg.strategy)) + " requires teachers");
    teachers->validate();
  }
  const Prepared prepared = prepare(data);
  std::vector<TeacherCache> caches;
  std::vector<std::vector<double>> reference;
  RunSpec spec;
  spec.data = &prepared;
  spec.student = CueNet<float>(arch).init_params(derive_seed(cfg.seed, "init"));
  spec.epochs = cfg.epochs;
  if (needs_teachers) {
    caches = cache_all(*teachers, prepared);
    spec.teachers = &caches;
  }
  switch (cfg.strategy) {
    case Strategy::baseline: break;
    case Strategy::single_teacher:
      for (std::size_t k = 0; k < teachers->members.size(); ++k)
        if (teachers->members[k].first == cfg.single_teacher) spec.single = k;
      if (!spec.single) throw ConfigError("missing teacher: " + std::string(to_string(cfg.single_teacher)));
      break;
    case Strategy::u_ensemble: spec.ensemble = true; break;
    case Strategy::redts:
      if (policies.empty()) policies = init_policies(*teachers, cfg.feature_dim);
      check_policies(policies, *teachers, cfg.feature_dim);
      reference = reference_features(cfg, arch, prepared);
      spec.policies = &policies;
      spec.reference = &reference;
      spec.update_policies = true;
      spec.action_mode = cfg.action_mode;
      break;
  }
  TrainResult r;
  r.student = {arch, run(spec, cfg, arch, &r.log)};
  r.policies = std::move(policies);
  return r;
}

}  // namespace remtkd
