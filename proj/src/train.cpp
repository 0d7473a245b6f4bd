#include "gcanet/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "gcanet/image_io.hpp"
#include "gcanet/metrics.hpp"
#include "gcanet/tensor_io.hpp"

namespace gcanet {

double lr_at(int64_t epoch, const TrainConfig& cfg) {
    return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));
}

Var residue_loss(const Tensor& corrupted, const Tensor& clean, const Var& predicted_residue) {
    check_same_shape("residue_loss", corrupted.shape(), clean.shape());
    check_same_shape("residue_loss", clean.shape(), predicted_residue->value.shape());
    Tensor target(clean.shape());
    for (int64_t i = 0; i < target.numel(); ++i) target[i] = clean[i] - corrupted[i];
    return mean_square(sub(predicted_residue, leaf(std::move(target))));
}

AdamState make_adam_state(const ParamList& params) {
    AdamState state;
    for (const Parameter* p : params) {
        state.m.emplace_back(p->value().shape(), 0.0);
        state.v.emplace_back(p->value().shape(), 0.0);
    }
    return state;
}

void adam_step(const ParamList& params, AdamState& state, double lr, const TrainConfig& cfg) {
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state holds " + std::to_string(state.m.size()) +
                                    " moments for " + std::to_string(params.size()) +
                                    " parameters");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (!p.trainable) continue;
        Tensor& g = p.grad();
        for (int64_t j = 0; j < g.numel(); ++j) {
            if (!std::isfinite(g[j]))
                throw std::runtime_error("adam_step: non-finite gradient in parameter '" +
                                         p.name() + "'");
            state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g[j];
            state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            p.value()[j] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

void clip_gradients(const ParamList& params, double max_norm) {
    double sq = 0.0;
    for (const Parameter* p : params) {
        if (!p->trainable) continue;
        const Tensor& g = p->var->grad;
        for (int64_t j = 0; j < g.numel(); ++j) sq += g[j] * g[j];
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double s = max_norm / norm;
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        for (int64_t j = 0; j < p->grad().numel(); ++j) p->grad()[j] *= s;
    }
}

EvalResult evaluate(GCANet& model, const std::vector<ManifestRow>& rows) {
    EvalResult r;
    for (const auto& row : rows) {
        const Tensor clean = read_png(row.clean_path);
        const Tensor restored = model.restore(read_png(row.corrupted_path));
        r.psnr.push_back(psnr(restored, clean));
        r.ssim.push_back(ssim(restored, clean));
    }
    if (!rows.empty()) {
        r.mean_psnr = std::accumulate(r.psnr.begin(), r.psnr.end(), 0.0) / r.psnr.size();
        r.mean_ssim = std::accumulate(r.ssim.begin(), r.ssim.end(), 0.0) / r.ssim.size();
    }
    return r;
}

EvalResult evaluate_identity(const std::vector<ManifestRow>& rows) {
    EvalResult r;
    for (const auto& row : rows) {
        const Tensor clean = read_png(row.clean_path);
        const Tensor corrupted = read_png(row.corrupted_path);
        r.psnr.push_back(psnr(corrupted, clean));
        r.ssim.push_back(ssim(corrupted, clean));
    }
    if (!rows.empty()) {
        r.mean_psnr = std::accumulate(r.psnr.begin(), r.psnr.end(), 0.0) / r.psnr.size();
        r.mean_ssim = std::accumulate(r.ssim.begin(), r.ssim.end(), 0.0) / r.ssim.size();
    }
    return r;
}

namespace {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

struct ResumeState {
    AdamState adam;
    int64_t next_epoch = 0;
    double best_val_psnr = -1.0;
    double first_epoch_loss = 0.0;
};

void save_resume_state(const std::string& path, const ResumeState& rs, const ParamList& params) {
    std::vector<std::pair<std::string, const Tensor*>> entries;
    for (size_t i = 0; i < params.size(); ++i) {
        entries.emplace_back("adam_m:" + params[i]->name(), &rs.adam.m[i]);
        entries.emplace_back("adam_v:" + params[i]->name(), &rs.adam.v[i]);
    }
    Tensor scalars(Shape{1, 1, 1, 4});
    scalars[0] = static_cast<double>(rs.adam.step);
    scalars[1] = static_cast<double>(rs.next_epoch);
    scalars[2] = rs.best_val_psnr;
    scalars[3] = rs.first_epoch_loss;
    entries.emplace_back("counters", &scalars);
    save_tensors(path, entries);
}

ResumeState load_resume_state(const std::string& path, const ParamList& params) {
    auto map = load_tensors(path);
    ResumeState rs;
    for (const Parameter* p : params) {
        auto m = map.find("adam_m:" + p->name());
        auto v = map.find("adam_v:" + p->name());
        if (m == map.end() || v == map.end())
            throw std::runtime_error("resume state " + path + " is missing moments for '" +
                                     p->name() + "'");
        rs.adam.m.push_back(std::move(m->second));
        rs.adam.v.push_back(std::move(v->second));
    }
    auto c = map.find("counters");
    if (c == map.end() || c->second.numel() != 4)
        throw std::runtime_error("resume state " + path + " has no counter block");
    rs.adam.step = static_cast<int64_t>(c->second[0]);
    rs.next_epoch = static_cast<int64_t>(c->second[1]);
    rs.best_val_psnr = c->second[2];
    rs.first_epoch_loss = c->second[3];
    return rs;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::string& dataset_dir, const std::string& out_dir,
                  const std::string& resume_from, int64_t stop_after_epoch) {
    std::filesystem::create_directories(out_dir);
    const auto rows = read_pair_set(dataset_dir);
    if (rows.size() < 2)
        throw std::runtime_error("train: dataset " + dataset_dir + " has fewer than 2 pairs");

    // deterministic split: a pair's role never depends on dataset order
    std::vector<ManifestRow> train_rows, val_rows;
    for (const auto& row : rows) {
        const uint64_t h = mix64(row.seed ^ mix64(static_cast<uint64_t>(row.index)) ^ cfg.seed);
        const bool val = (h % 1000) < static_cast<uint64_t>(cfg.val_fraction * 1000.0);
        (val ? val_rows : train_rows).push_back(row);
    }
    if (val_rows.empty()) {
        val_rows.push_back(train_rows.back());
        train_rows.pop_back();
    }
    if (train_rows.empty())
        throw std::runtime_error("train: validation split consumed every pair");

    struct Pair {
        Tensor clean, corrupted;
    };
    std::vector<Pair> data;
    for (const auto& row : train_rows)
        data.push_back({read_png(row.clean_path), read_png(row.corrupted_path)});

    GCANet model = resume_from.empty() ? GCANet(model_cfg, cfg.seed)
                                       : GCANet::load_checkpoint(resume_from);
    ParamList params = model.parameters();

    ResumeState rs;
    if (resume_from.empty()) {
        rs.adam = make_adam_state(params);
    } else {
        rs = load_resume_state(resume_from + ".state", params);
    }

    TrainResult result;
    result.best_checkpoint = out_dir + "/best.gcat";
    result.log_path = out_dir + "/train_log.csv";
    result.best_val_psnr = rs.best_val_psnr;

    std::ofstream log(result.log_path, resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("train: cannot write " + result.log_path);
    if (resume_from.empty()) log << "epoch,lr,train_loss,val_psnr,val_ssim\n";

    const Shape img_shape = data[0].clean.shape();
    const int64_t crop =
        (cfg.crop > 0 && cfg.crop < std::min(img_shape.h, img_shape.w)) ? cfg.crop : 0;

    for (int64_t epoch = rs.next_epoch; epoch < cfg.epochs; ++epoch) {
        // fresh per-epoch stream makes interrupted and uninterrupted runs agree
        std::mt19937_64 rng(mix64(cfg.seed ^ mix64(static_cast<uint64_t>(epoch) + 1)));
        std::vector<size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);

        const double lr = lr_at(epoch, cfg);
        double epoch_loss = 0.0;
        int64_t batches = 0;
        bool diverged = false;

        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const int64_t n =
                std::min<int64_t>(cfg.batch_size, static_cast<int64_t>(order.size() - start));
            const int64_t bh = crop ? crop : img_shape.h;
            const int64_t bw = crop ? crop : img_shape.w;
            Tensor bclean(Shape{n, 3, bh, bw}), bcorr(Shape{n, 3, bh, bw});
            for (int64_t b = 0; b < n; ++b) {
                const Pair& p = data[order[start + b]];
                int64_t oy = 0, ox = 0;
                if (crop) {
                    oy = std::uniform_int_distribution<int64_t>(0, img_shape.h - crop)(rng);
                    ox = std::uniform_int_distribution<int64_t>(0, img_shape.w - crop)(rng);
                }
                for (int64_t c = 0; c < 3; ++c)
                    for (int64_t y = 0; y < bh; ++y)
                        for (int64_t x = 0; x < bw; ++x) {
                            bclean.at(b, c, y, x) = p.clean.at(0, c, oy + y, ox + x);
                            bcorr.at(b, c, y, x) = p.corrupted.at(0, c, oy + y, ox + x);
                        }
            }

            for (Parameter* p : params) p->var->zero_grad();
            Var residue = model.forward(leaf(bcorr), true);
            Var loss = residue_loss(bcorr, bclean, residue);
            const double loss_val = loss->value[0];
            if (!std::isfinite(loss_val)) {
                diverged = true;
                break;
            }
            backward(loss);
            clip_gradients(params, cfg.grad_clip_norm);
            try {
                adam_step(params, rs.adam, lr, cfg);
            } catch (const std::runtime_error&) {
                diverged = true;
                break;
            }
            epoch_loss += loss_val;
            ++batches;
        }

        if (diverged) {
            // leave best.gcat and last.gcat at the previous healthy epoch
            result.aborted_nan = true;
            break;
        }

        epoch_loss /= std::max<int64_t>(1, batches);
        if (epoch == 0) rs.first_epoch_loss = epoch_loss;
        result.final_epoch_loss = epoch_loss;

        const EvalResult val = evaluate(model, val_rows);
        log << epoch << "," << lr << "," << epoch_loss << "," << val.mean_psnr << ","
            << val.mean_ssim << "\n";
        log.flush();

        if (val.mean_psnr > result.best_val_psnr) {
            result.best_val_psnr = val.mean_psnr;
            model.save_checkpoint(result.best_checkpoint);
        }
        rs.next_epoch = epoch + 1;
        rs.best_val_psnr = result.best_val_psnr;
        model.save_checkpoint(out_dir + "/last.gcat");
        save_resume_state(out_dir + "/last.gcat.state", rs, params);

        if (stop_after_epoch >= 0 && epoch >= stop_after_epoch) break;
    }

    result.first_epoch_loss = rs.first_epoch_loss;
    return result;
}

}  // namespace gcanet
