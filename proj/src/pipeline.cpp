#include "remtkd/pipeline.hpp"

#include <cstdio>
#include <sstream>

namespace remtkd {

Suite make_suite(const RunConfig& cfg) {
  Suite s;
  DatasetConfig dc;
  dc.seed = cfg.get<std::uint64_t>("seed");
  dc.image_size = cfg.get<int>("image_size");
  dc.synth = cfg.synth();
  const int ntrain = cfg.get<int>("train_per_type"), ntest = cfg.get<int>("test_per_type");
  dc.split = "train";
  dc.counts = {{ForgeryType::authentic, ntrain}};
  for (auto t : kTeacherTypes) dc.counts[t] = ntrain;
  s.train = generate_split(dc);
  dc.split = "test";
  dc.counts.clear();
  for (auto t : kAllForgeryTypes) dc.counts[t] = ntest;
  s.test = generate_split(dc);
  return s;
}

std::vector<SampleRecord> teacher_subset(const std::vector<SampleRecord>& train, ForgeryType type) {
  std::vector<SampleRecord> out;
  for (const auto& s : train)
    if (s.forgery_type == ForgeryType::authentic || s.forgery_type == type) out.push_back(s);
  return out;
}

TeacherBundle train_teachers(const std::vector<SampleRecord>& train, const RunConfig& cfg,
                             std::map<std::string, TrainLog>* logs) {
  TeacherBundle b;
  const auto tcfg = cfg.teacher_trainer();
  for (auto t : kTeacherTypes) {
    TrainLog log;
    b.members.emplace_back(t, pretrain_teacher(t, teacher_subset(train, t), tcfg, cfg.arch(), &log));
    if (logs) (*logs)[std::string(to_string(t))] = std::move(log);
  }
  return b;
}

std::vector<AblationRow> run_ablation(const Suite& suite, const TeacherBundle& teachers, const RunConfig& base,
                                      const std::vector<std::string>& strategies,
                                      const std::vector<std::string>& rewards, const std::vector<std::string>& softs,
                                      const Progress& progress) {
  std::vector<AblationRow> rows;
  const auto arch = base.arch();
  const CueNet<float> net(arch);
  const auto eopts = base.eval_options();
  std::vector<TeacherPolicy> warm;
  bool have_warm = false;
  for (const auto& strat : strategies) {
    // Only redts depends on the reward; only teacher strategies depend on the soft variant.
    const bool uses_reward = strat == "redts";
    const bool uses_soft = strat != "baseline";
    const std::vector<std::string> rs = uses_reward ? rewards : std::vector<std::string>{"-"};
    const std::vector<std::string> ss = uses_soft ? softs : std::vector<std::string>{"-"};
    for (const auto& r : rs)
      for (const auto& s : ss) {
        RunConfig c = base;
        AblationRow row;
        if (strat.rfind("single_", 0) == 0) {
          row.single_teacher = strat.substr(7);
          c.set("strategy", "single_teacher");
          c.set("single_teacher", row.single_teacher);
        } else {
          c.set("strategy", strat);
        }
        if (r != "-") c.set("reward", r);
        if (s != "-") c.set("soft", s);
        auto tc = c.student_trainer();
        row.strategy = tc.strategy;
        row.reward = r;
        row.soft = s;
        row.label = strat + (r != "-" ? "+" + r : "") + (s != "-" ? "+" + s : "");
        if (progress) progress("training " + row.label);
        std::vector<TeacherPolicy> policies;
        if (tc.strategy == Strategy::redts) {
          if (!have_warm) {
            warm = pretrain_policy(teachers, suite.train, tc, arch);
            have_warm = true;
          }
          policies = warm;
        }
        auto res = train_student(tc.strategy == Strategy::baseline ? nullptr : &teachers, policies, suite.train, tc,
                                 arch);
        row.report = evaluate(net, res.student.store, suite.test, std::nullopt, eopts);
        row.average_f1 = row.report.average_f1();
        row.student = std::move(res.student.store);
        if (progress) {
          char buf[96];
          std::snprintf(buf, sizeof buf, "%s average_f1=%.4f", row.label.c_str(), row.average_f1);
          progress(buf);
        }
        rows.push_back(std::move(row));
      }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "label,strategy,single_teacher,reward,soft,average_f1";
  for (auto t : kTamperTypes) os << ',' << to_string(t) << "_image_f1," << to_string(t) << "_pixel_f1";
  os << '\n';
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.6f", v);
    return std::string(b);
  };
  for (const auto& r : rows) {
    os << r.label << ',' << to_string(r.strategy) << ',' << r.single_teacher << ',' << r.reward << ',' << r.soft << ','
       << num(r.average_f1);
    for (auto t : kTamperTypes) {
      auto it = r.report.per_type.find(t);
      if (it == r.report.per_type.end())
        os << ",,";
      else
        os << ',' << num(it->second.image_f1) << ',' << num(it->second.pixel_f1);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace remtkd
