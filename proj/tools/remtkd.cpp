// Command-line front end: one subcommand per pipeline stage.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "remtkd/config.hpp"
#include "remtkd/io.hpp"
#include "remtkd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace remtkd;

namespace {

fs::path out_root() {
  const char* env = std::getenv("REMTKD_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

// Config plumbing shared by every subcommand.
struct ConfigOptions {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "JSON config file (flat keys)");
    cmd->add_option("--set", sets, "key=value override, repeatable");
    for (const auto& key : RunConfig::keys()) {
      std::string flag = "--" + key;
      for (auto& ch : flag)
        if (ch == '_') ch = '-';
      cmd->add_option_function<std::string>(
          flag, [this, key](const std::string& v) { flags[key] = v; }, "config key " + key);
    }
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!file.empty()) c.merge_file(file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) c.set(k, v);
    return c;
  }
};

void log_line(const std::string& s) { std::cerr << s << '\n'; }

void echo_config(const std::string& cmd, const RunConfig& c) {
  nlohmann::ordered_json j = {{"kind", "config"}, {"command", cmd}, {"config", c.json()}};
  log_line(j.dump());
}

void write_run_log(const fs::path& p, const std::string& cmd, const RunConfig& c, const std::string& body) {
  nlohmann::ordered_json j = {{"kind", "config"}, {"command", cmd}, {"config", c.json()}};
  io::atomic_write(p, j.dump() + "\n" + body);
}

std::vector<SampleRecord> load_split(const fs::path& data_root, const std::string& split, const RunConfig& c) {
  const auto mf = data_root / split / "manifest.jsonl";
  if (!fs::exists(mf)) throw StorageError("missing manifest: " + mf.string());
  return io::load_samples(io::read_manifest(mf), c.get<int>("edge_width"));
}

fs::path teacher_path(const fs::path& dir, ForgeryType t) {
  return dir / ("teacher_" + std::string(to_string(t)) + ".rmtk");
}

TeacherBundle load_teachers(const fs::path& dir) {
  TeacherBundle b;
  for (auto t : kTeacherTypes) {
    const auto p = teacher_path(dir, t);
    if (!fs::exists(p)) throw StorageError("missing teacher checkpoint: " + p.string());
    b.members.emplace_back(t, io::load_model(p));
  }
  return b;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforced multi-teacher distillation for image forgery localization"};
  app.require_subcommand(1);
  const fs::path root = out_root();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic train/test suite as PNG + manifest");
  ConfigOptions gen_cfg;
  gen_cfg.attach(gen);
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory (default $REMTKD_OUT/data)");

  // train-teacher
  auto* tt = app.add_subcommand("train-teacher", "Pretrain one single-type teacher (or all three)");
  ConfigOptions tt_cfg;
  tt_cfg.attach(tt);
  std::string tt_data, tt_type = "all", tt_out;
  tt->add_option("--data", tt_data, "data root from gen-data (default $REMTKD_OUT/data)");
  tt->add_option("--type", tt_type, "copy_move, splicing, inpainting or all");
  tt->add_option("--out", tt_out, "teacher directory (default $REMTKD_OUT/teachers)");

  // pretrain-policy
  auto* pp = app.add_subcommand("pretrain-policy", "Warm up the teacher-selection policies");
  ConfigOptions pp_cfg;
  pp_cfg.attach(pp);
  std::string pp_data, pp_teachers, pp_out;
  pp->add_option("--data", pp_data, "data root");
  pp->add_option("--teachers", pp_teachers, "teacher directory");
  pp->add_option("--out", pp_out, "policy checkpoint (default $REMTKD_OUT/policies/warmup.rmtk)");

  // distill
  auto* ds = app.add_subcommand("distill", "Train a student with the configured strategy");
  ConfigOptions ds_cfg;
  ds_cfg.attach(ds);
  std::string ds_data, ds_teachers, ds_policies, ds_out;
  ds->add_option("--data", ds_data, "data root");
  ds->add_option("--teachers", ds_teachers, "teacher directory");
  ds->add_option("--policies", ds_policies, "initial policies (redts); warm-up runs when omitted");
  ds->add_option("--out", ds_out, "student checkpoint (default $REMTKD_OUT/students/<strategy>.rmtk)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  ConfigOptions ev_cfg;
  ev_cfg.attach(ev);
  std::string ev_model, ev_data, ev_perturb, ev_out;
  ev->add_option("--model", ev_model, "model checkpoint")->required();
  ev->add_option("--data", ev_data, "data root");
  ev->add_option("--perturb", ev_perturb, "kind:severity, e.g. jpeg:75 or gaussian_blur:1");
  ev->add_option("--out", ev_out, "report prefix; writes <out>.csv and <out>.jsonl");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the strategy x reward x soft-loss grid");
  ConfigOptions ab_cfg;
  ab_cfg.attach(ab);
  std::string ab_data, ab_teachers, ab_out, ab_strats = "baseline,u_ensemble,redts", ab_rewards = "reward3",
                                            ab_softs = "soft3";
  ab->add_option("--data", ab_data, "data root");
  ab->add_option("--teachers", ab_teachers, "teacher directory");
  ab->add_option("--strategies", ab_strats,
                 "comma list of baseline, u_ensemble, redts, single_copy_move, single_splicing, single_inpainting");
  ab->add_option("--rewards", ab_rewards, "comma list of reward1..reward3 (redts rows)");
  ab->add_option("--softs", ab_softs, "comma list of soft1..soft3 (teacher rows)");
  ab->add_option("--out", ab_out, "comparison table CSV (default $REMTKD_OUT/ablation.csv)");

  // plot
  auto* pl = app.add_subcommand("plot", "Metric-vs-severity robustness curves as SVG");
  ConfigOptions pl_cfg;
  pl_cfg.attach(pl);
  std::vector<std::string> pl_models;
  std::string pl_data, pl_kind = "jpeg", pl_sev = "95,75,50", pl_out, pl_metric = "pixel_f1";
  pl->add_option("--model", pl_models, "model checkpoint(s)")->required();
  pl->add_option("--data", pl_data, "data root");
  pl->add_option("--kind", pl_kind, "jpeg, gaussian_blur, gaussian_noise or median_filter");
  pl->add_option("--severities", pl_sev, "comma list of severities");
  pl->add_option("--metric", pl_metric, "pixel_f1, pixel_iou or image_f1");
  pl->add_option("--out", pl_out, "SVG path (default $REMTKD_OUT/plots/<kind>.svg); CSV written alongside");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    auto data_root = [&](const std::string& s) { return s.empty() ? root / "data" : fs::path(s); };
    auto teacher_root = [&](const std::string& s) { return s.empty() ? root / "teachers" : fs::path(s); };

    if (gen->parsed()) {
      const auto c = gen_cfg.resolve();
      echo_config("gen-data", c);
      const fs::path out = gen_out.empty() ? root / "data" : fs::path(gen_out);
      DatasetConfig dc;
      dc.seed = c.get<std::uint64_t>("seed");
      dc.image_size = c.get<int>("image_size");
      dc.synth = c.synth();
      dc.split = "train";
      dc.counts = {{ForgeryType::authentic, c.get<int>("train_per_type")}};
      for (auto t : kTeacherTypes) dc.counts[t] = c.get<int>("train_per_type");
      const auto tr = build_dataset(dc, out);
      dc.split = "test";
      dc.counts.clear();
      for (auto t : kAllForgeryTypes) dc.counts[t] = c.get<int>("test_per_type");
      const auto te = build_dataset(dc, out);
      log_line("wrote " + std::to_string(tr.records.size()) + " train and " + std::to_string(te.records.size()) +
               " test samples to " + out.string());
      return 0;
    }

    if (tt->parsed()) {
      const auto c = tt_cfg.resolve();
      echo_config("train-teacher", c);
      const auto train = load_split(data_root(tt_data), "train", c);
      const fs::path out = teacher_root(tt_out);
      std::vector<ForgeryType> types;
      if (tt_type == "all")
        types.assign(std::begin(kTeacherTypes), std::end(kTeacherTypes));
      else
        types.push_back(forgery_type_from_string(tt_type));
      for (auto t : types) {
        TrainLog log;
        const auto m = pretrain_teacher(t, teacher_subset(train, t), c.teacher_trainer(), c.arch(), &log);
        const auto p = teacher_path(out, t);
        io::save_model(p, m);
        write_run_log(p.string() + ".log.jsonl", "train-teacher", c, log.to_jsonl());
        log_line("saved " + p.string());
      }
      return 0;
    }

    if (pp->parsed()) {
      const auto c = pp_cfg.resolve();
      echo_config("pretrain-policy", c);
      const auto train = load_split(data_root(pp_data), "train", c);
      const auto teachers = load_teachers(teacher_root(pp_teachers));
      TrainLog log;
      const auto pol = pretrain_policy(teachers, train, c.student_trainer(), c.arch(), &log);
      const fs::path out = pp_out.empty() ? root / "policies" / "warmup.rmtk" : fs::path(pp_out);
      io::save_policies(out, pol);
      write_run_log(out.string() + ".log.jsonl", "pretrain-policy", c, log.to_jsonl());
      log_line("saved " + out.string());
      return 0;
    }

    if (ds->parsed()) {
      const auto c = ds_cfg.resolve();
      echo_config("distill", c);
      const auto tc = c.student_trainer();
      const auto train = load_split(data_root(ds_data), "train", c);
      std::optional<TeacherBundle> teachers;
      if (tc.strategy != Strategy::baseline) teachers = load_teachers(teacher_root(ds_teachers));
      std::vector<TeacherPolicy> pol;
      if (tc.strategy == Strategy::redts) {
        if (!ds_policies.empty()) {
          if (!fs::exists(ds_policies)) throw StorageError("missing policy checkpoint: " + ds_policies);
          pol = io::load_policies(ds_policies);
        } else {
          pol = pretrain_policy(*teachers, train, tc, c.arch());
        }
      }
      auto res = train_student(teachers ? &*teachers : nullptr, pol, train, tc, c.arch());
      const fs::path out =
          ds_out.empty() ? root / "students" / (c.get<std::string>("strategy") + ".rmtk") : fs::path(ds_out);
      io::save_model(out, res.student);
      if (tc.strategy == Strategy::redts) io::save_policies(out.string() + ".policies", res.policies);
      write_run_log(out.string() + ".log.jsonl", "distill", c, res.log.to_jsonl());
      log_line("saved " + out.string());
      return 0;
    }

    if (ev->parsed()) {
      const auto c = ev_cfg.resolve();
      echo_config("evaluate", c);
      if (!fs::exists(ev_model)) throw StorageError("missing model checkpoint: " + ev_model);
      const auto m = io::load_model(ev_model);
      const auto test = load_split(data_root(ev_data), "test", c);
      std::optional<PerturbationSpec> pert;
      if (!ev_perturb.empty()) pert = parse_perturbation(ev_perturb);
      const auto rep = evaluate(CueNet<float>(m.arch), m.store, test, pert, c.eval_options());
      const std::string label = pert ? pert->label() : "clean";
      std::cout << rep.to_csv(label);
      if (!ev_out.empty()) {
        io::atomic_write(ev_out + ".csv", rep.to_csv(label));
        io::atomic_write(ev_out + ".jsonl", rep.to_jsonl(label));
      }
      return 0;
    }

    if (ab->parsed()) {
      const auto c = ab_cfg.resolve();
      echo_config("ablate", c);
      Suite suite;
      suite.train = load_split(data_root(ab_data), "train", c);
      suite.test = load_split(data_root(ab_data), "test", c);
      const auto strats = split_list(ab_strats);
      bool need_teachers = false;
      for (const auto& s : strats) need_teachers |= s != "baseline";
      TeacherBundle teachers;
      if (need_teachers) teachers = load_teachers(teacher_root(ab_teachers));
      const auto rows =
          run_ablation(suite, teachers, c, strats, split_list(ab_rewards), split_list(ab_softs), log_line);
      const std::string csv = ablation_csv(rows);
      std::cout << csv;
      io::atomic_write(ab_out.empty() ? root / "ablation.csv" : fs::path(ab_out), csv);
      return 0;
    }

    if (pl->parsed()) {
      const auto c = pl_cfg.resolve();
      echo_config("plot", c);
      const auto test = load_split(data_root(pl_data), "test", c);
      const auto kind = perturbation_kind_from_string(pl_kind);
      std::vector<double> sev;
      for (const auto& s : split_list(pl_sev)) sev.push_back(parse_perturbation(pl_kind + ":" + s).severity);
      std::vector<Curve> curves;
      std::string csv = "model,kind,severity," + pl_metric + "\n";
      for (const auto& mp : pl_models) {
        if (!fs::exists(mp)) throw StorageError("missing model checkpoint: " + mp);
        const auto m = io::load_model(mp);
        Curve cv;
        cv.name = fs::path(mp).stem().string();
        for (double s : sev) {
          const auto rep = evaluate(CueNet<float>(m.arch), m.store, test, PerturbationSpec{kind, s}, c.eval_options());
          double v = 0;
          if (pl_metric == "pixel_f1") v = rep.average.pixel_f1;
          else if (pl_metric == "pixel_iou") v = rep.average.pixel_iou;
          else if (pl_metric == "image_f1") v = rep.average.image_f1;
          else throw ConfigError("unknown metric: " + pl_metric);
          cv.x.push_back(s);
          cv.y.push_back(v);
          csv += cv.name + "," + pl_kind + "," + std::to_string(s) + "," + std::to_string(v) + "\n";
        }
        curves.push_back(std::move(cv));
      }
      const fs::path out = pl_out.empty() ? root / "plots" / (pl_kind + ".svg") : fs::path(pl_out);
      io::atomic_write(out, render_svg(curves, "Robustness: " + pl_kind, "severity", pl_metric));
      fs::path csv_path = out;
      csv_path.replace_extension(".csv");
      io::atomic_write(csv_path, csv);
      std::cout << csv;
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const ChecksumError& e) {
    std::cerr << "error: checksum: " << e.what() << '\n';
    return 4;
  } catch (const StorageError& e) {
    std::cerr << "error: storage: " << e.what() << '\n';
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "error: shape: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
