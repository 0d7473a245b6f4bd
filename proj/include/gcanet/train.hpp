#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcanet/autograd.hpp"
#include "gcanet/model.hpp"
#include "gcanet/synth.hpp"

namespace gcanet {

struct TrainConfig {
    int64_t epochs = 100;
    double lr0 = 0.01;
    int64_t lr_decay_every = 40;  // multiply lr by 0.1 at these epoch boundaries
    double lr_decay = 0.1;
    int64_t batch_size = 4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip_norm = 5.0;
    int64_t crop = 48;     // random square crop edge; 0 trains on full images
    uint64_t seed = 7;
    double val_fraction = 0.1;
};

double lr_at(int64_t epoch, const TrainConfig& cfg);

// mean squared error between the predicted residue and (clean - corrupted)
Var residue_loss(const Tensor& corrupted, const Tensor& clean, const Var& predicted_residue);

// one Adam moment pair per parameter, flat layout matching the parameter list
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    int64_t step = 0;
};

AdamState make_adam_state(const ParamList& params);

// standard Adam with bias correction; throws on NaN gradients, naming the
// parameter. lr already includes the schedule.
void adam_step(const ParamList& params, AdamState& state, double lr,
               const TrainConfig& cfg);

// scales all gradients so their global L2 norm is at most max_norm
void clip_gradients(const ParamList& params, double max_norm);

struct EvalResult {
    std::vector<double> psnr;
    std::vector<double> ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

// restores every corrupted image in the pair set and scores it against its
// clean partner
EvalResult evaluate(GCANet& model, const std::vector<ManifestRow>& rows);

// scores the corrupted images directly (the no-op baseline)
EvalResult evaluate_identity(const std::vector<ManifestRow>& rows);

struct TrainResult {
    std::string best_checkpoint;
    std::string log_path;
    double best_val_psnr = 0.0;
    double first_epoch_loss = 0.0;
    double final_epoch_loss = 0.0;
    bool aborted_nan = false;
};

// full training loop: deterministic per seed, per-epoch CSV log, best
// validation checkpoint kept. resume_from, when non-empty, must name a
// checkpoint written by this function; training continues at the recorded
// epoch and matches an uninterrupted run bit for bit.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::string& dataset_dir, const std::string& out_dir,
                  const std::string& resume_from = "", int64_t stop_after_epoch = -1);

}  // namespace gcanet
