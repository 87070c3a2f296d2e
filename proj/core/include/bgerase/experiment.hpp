#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bgerase/checkpoint.hpp"
#include "bgerase/config.hpp"
#include "bgerase/eval.hpp"
#include "bgerase/synthdata.hpp"
#include "bgerase/trainer.hpp"

namespace bgerase {

using ProgressFn = std::function<void(const std::string&)>;

/// Human-readable list of generator settings that differ; empty when they match.
std::string dataset_mismatch(const DatasetConfig& want, const DatasetConfig& have);

/// Opens the dataset under `root`, generating it first when no manifest exists.
Dataset ensure_dataset(const ExperimentConfig& cfg, const std::filesystem::path& root);

/// Trains one model; when `out_dir` is non-empty writes checkpoint.bgck,
/// metrics.jsonl and config.json there.
Checkpoint pretrain(const ExperimentConfig& cfg, const Dataset& data,
                    const std::filesystem::path& out_dir, const ProgressFn& progress = {});

/// Frozen-encoder evaluation with cached per-split features and probe.
class Evaluator {
 public:
  Evaluator(Encoder<float> encoder, ExperimentConfig cfg, const Dataset& data);

  const Encoder<float>& encoder() const noexcept { return encoder_; }
  const VideoFeatures& features(Split split, ProbeFeatures source);
  const LinearProbe& probe();
  ProbeResult probe_split(Split test);
  /// Two-fold cross-fit probe trained and tested on test_static.
  ProbeResult static_probe();
  RecallTable retrieval(Split gallery, Split query);

 private:
  Encoder<float> encoder_;
  ExperimentConfig cfg_;
  const Dataset& data_;
  std::map<std::pair<Split, ProbeFeatures>, VideoFeatures> cache_;
  std::unique_ptr<LinearProbe> probe_;
};

ProbeConfig probe_config(const ExperimentConfig& cfg);

struct FineTuneResult {
  Encoder<float> encoder;  ///< backbone plus a classifier head over the dataset classes
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;  ///< over the clips seen in the last epoch
};

/// Supervised fine-tuning of the whole backbone and a fresh classifier head on
/// the labelled training split; the alternative to the frozen linear probe.
FineTuneResult fine_tune(const Encoder<float>& pretrained, const ExperimentConfig& cfg,
                         const Dataset& data, const ProgressFn& progress = {});

/// Classifier predictions of a fine-tuned encoder, summed over `eval.clips` centre-cropped clips.
ProbeResult fine_tune_predict(const Encoder<float>& tuned, const ExperimentConfig& cfg,
                              const Dataset& data, Split split);

struct DiagnoseResult {
  ProbeResult baseline;
  ProbeResult be;
  ProbeResult static_probe;
  BiasDiagnostic diagnostic;
};

/// Static accuracy comes from the baseline encoder's cross-fit probe on test_static.
DiagnoseResult diagnose(Evaluator& baseline, Evaluator& be, Split split,
                        Improvement mode = Improvement::absolute);
std::string diagnose_json(const DiagnoseResult& r, const std::string& baseline_hash,
                          const std::string& be_hash);

struct AblationRow {
  DistractorVariant variant = DistractorVariant::none;
  ProbeResult antibias;
  ProbeResult inbias;
  double final_loss = 0.0;
  Checkpoint checkpoint;
};

/// Config for one ablation arm: variant none runs without BE.
ExperimentConfig ablation_config(const ExperimentConfig& base, DistractorVariant v);

/// Pretrains and probes every distractor variant in table order.
std::vector<AblationRow> ablate_distractors(const ExperimentConfig& cfg, const Dataset& data,
                                            const std::filesystem::path& out_dir,
                                            const ProgressFn& progress = {});
std::string ablation_json(const std::vector<AblationRow>& rows, const ExperimentConfig& cfg);
std::string ablation_text(const std::vector<AblationRow>& rows);

/// Summary of a metrics JSON-lines log.
struct MetricsSummary {
  std::size_t steps = 0;
  int epochs = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  std::vector<double> epoch_mean_loss;
  std::vector<std::string> warnings;
};

MetricsSummary summarize_metrics(const std::filesystem::path& jsonl);
std::string metrics_summary_json(const MetricsSummary& s);
std::string metrics_summary_text(const MetricsSummary& s);

}  // namespace bgerase
