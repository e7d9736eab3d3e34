#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "remtkd/config.hpp"
#include "remtkd/distill.hpp"
#include "remtkd/evalkit.hpp"
#include "remtkd/synth.hpp"

namespace remtkd {

struct Suite {
  std::vector<SampleRecord> train;  // authentic + the three single tamper types
  std::vector<SampleRecord> test;   // all five types
};

// In-memory synthetic suite with the split layout used throughout the pipeline.
Suite make_suite(const RunConfig& cfg);

// authentic + `type` samples of a training set.
std::vector<SampleRecord> teacher_subset(const std::vector<SampleRecord>& train, ForgeryType type);

TeacherBundle train_teachers(const std::vector<SampleRecord>& train, const RunConfig& cfg,
                             std::map<std::string, TrainLog>* logs = nullptr);

using Progress = std::function<void(const std::string&)>;

// One row of the strategy comparison.
struct AblationRow {
  std::string label;
  Strategy strategy = Strategy::baseline;
  std::string single_teacher;
  std::string reward;
  std::string soft;
  MetricsReport report;
  double average_f1 = 0;
  ParamStore<float> student;
};

// Strategy names understood by the ablation grid: baseline, u_ensemble, redts,
// single_copy_move, single_splicing, single_inpainting.
std::vector<AblationRow> run_ablation(const Suite& suite, const TeacherBundle& teachers, const RunConfig& base,
                                      const std::vector<std::string>& strategies,
                                      const std::vector<std::string>& rewards, const std::vector<std::string>& softs,
                                      const Progress& progress = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace remtkd
