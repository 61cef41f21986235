#pragma once

#include <string>
#include <vector>

#include "winmatch/homography.hpp"
#include "winmatch/loss.hpp"
#include "winmatch/model.hpp"
#include "winmatch/synthetic.hpp"

namespace winmatch {

// Adam moment buffers, one pair per parameter tensor.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  long t = 0;
  static AdamState init(const std::vector<Tensor>& params);
};

// One update from the gradients currently stored on the parameters.
void adam_step(const std::vector<Tensor>& params, AdamState& st, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainingBatch {
  Image a, b;
  GroundTruth gt;
};
TrainingBatch make_training_batch(const SyntheticPair& pair);

struct LossBreakdown {
  Tensor total;
  double window = 0, patch = 0, pixel = 0;
  int fine_pairs = 0;  // supervision pairs that survived the margin check
};

// Full supervised forward pass in learned mode. The subpixel weights
// 1/sigma^2 are constants; `frozen_sigma2` (one slot per supervision pair,
// negative = dropped) replays the weights and drop pattern captured by a
// previous call's `sigma2_out`, which keeps finite-difference probes of the
// loss aligned with the gradient the optimizer sees.
LossBreakdown training_forward(const Model& model, const TrainingBatch& batch,
                               const PipelineConfig& cfg,
                               const std::vector<double>* frozen_sigma2 = nullptr,
                               std::vector<double>* sigma2_out = nullptr);

struct TrainResult {
  double initial_loss = 0;
  double final_loss = 0;
  std::vector<double> history;  // one entry per step
  bool finite = true;           // no NaN/inf seen in losses or parameters
};

// Plain single-sample Adam loop cycling through `data` for `steps` updates.
TrainResult train_model(Model& model, const std::vector<TrainingBatch>& data,
                        const PipelineConfig& cfg, int steps);

// Fraction of predicted coarse matches that agree with the supervision set,
// averaged over the batches (batches with no predictions score 0).
double coarse_precision_on(const Model& model, const std::vector<TrainingBatch>& data,
                           const PipelineConfig& cfg);

// Per-pair evaluation against the generating homography.
struct EvalReport {
  std::string kind;
  bool empty = false;  // no fine matches: precision fields are degenerate zeros
  int num_coarse = 0;
  int num_fine = 0;
  int dropped_at_margin = 0;
  double coarse_precision = 0.0;  // predicted coarse matches in the truth set
  double precision = 0.0;         // fine matches within 3 px of the true mapping
  bool homography_ok = false;     // enough matches to fit one
  double corner_err_px = -1.0;    // mean corner displacement; -1 when no fit
  // Pass fractions at the 3/5/10 px corner-error thresholds (0 or 1 per pair).
  double corner_pass_3 = 0.0, corner_pass_5 = 0.0, corner_pass_10 = 0.0;
  std::string config_echo;  // canonical JSON of the config that produced this
};

EvalReport evaluate_matches(const SyntheticPair& pair, const MatchSet& matches,
                            const PipelineConfig& cfg);
// Deterministic JSON (stable key order, fixed float formatting).
std::string report_to_json(const EvalReport& r);

}  // namespace winmatch
