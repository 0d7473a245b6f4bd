#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "gcanet/analysis.hpp"
#include "gcanet/image_io.hpp"
#include "gcanet/metrics.hpp"
#include "gcanet/model.hpp"
#include "gcanet/synth.hpp"
#include "gcanet/train.hpp"

namespace fs = std::filesystem;
using namespace gcanet;

namespace {

constexpr int kExitFlags = 2;
constexpr int kExitIo = 3;
constexpr int kExitMismatch = 4;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// deterministic replay record: every flag that affects the run, no timestamps
void write_run_meta(const std::string& out_dir, const std::string& subcommand,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream meta(fs::path(out_dir) / "run.meta", std::ios::trunc);
    if (!meta) throw IoError("cannot write run.meta in " + out_dir);
    meta << "command=" << subcommand << "\n";
    for (const auto& [k, v] : kv) meta << k << "=" << v << "\n";
}

int64_t thread_cap() {
    if (const char* env = std::getenv("GCANET_THREADS")) {
        const int64_t n = std::strtoll(env, nullptr, 10);
        if (n >= 1) return n;
    }
    return 1;
}

GCANet load_model(const std::string& ckpt) {
    if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt);
    try {
        return GCANet::load_checkpoint(ckpt);
    } catch (const std::exception& e) {
        throw MismatchError(std::string("checkpoint rejected: ") + e.what());
    }
}

NormKind norm_from_flag(const std::string& s) {
    if (s == "instance") return NormKind::instance;
    if (s == "batch") return NormKind::batch;
    if (s == "none") return NormKind::none;
    throw CLI::ValidationError("--norm", "expected instance, batch, or none");
}

std::vector<fs::path> png_inputs(const std::string& in) {
    std::vector<fs::path> files;
    if (fs::is_directory(in)) {
        for (const auto& e : fs::directory_iterator(in))
            if (e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else if (fs::exists(in)) {
        files.push_back(in);
    }
    if (files.empty()) throw IoError("no PNG inputs at " + in);
    return files;
}

void print_eval_table(const std::vector<std::string>& names, const EvalResult& ev,
                      const std::string& csv_path) {
    std::ostringstream table;
    table << "image,psnr,ssim\n";
    for (size_t i = 0; i < names.size(); ++i)
        table << names[i] << "," << ev.psnr[i] << "," << ev.ssim[i] << "\n";
    table << "mean," << ev.mean_psnr << "," << ev.mean_ssim << "\n";
    std::cout << table.str();
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) throw IoError("cannot write " + csv_path);
        csv << table.str();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GCANet dehazing/deraining toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value file; command-line flags take precedence");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate clean/corrupted training pairs");
    struct {
        std::string out;
        int64_t count = 16, size = 64;
        std::string mode = "depth_ramp";
        uint64_t seed = 7;
        double beta = 1.2, t0 = 0.7;
        bool rain = false;
        double density = 0.003, intensity = 0.6, angle = 70.0;
        int64_t length = 9;
    } sy;
    synth->add_option("--out", sy.out, "output directory")->required();
    synth->add_option("--count", sy.count, "number of pairs");
    synth->add_option("--size", sy.size, "square image edge");
    synth->add_option("--mode", sy.mode, "constant_t | depth_ramp | perlin_t");
    synth->add_option("--seed", sy.seed, "base seed");
    synth->add_option("--beta", sy.beta, "scattering coefficient");
    synth->add_option("--t0", sy.t0, "transmission for constant_t mode");
    synth->add_flag("--rain", sy.rain, "rain streaks instead of haze");
    synth->add_option("--density", sy.density, "rain streaks per pixel");
    synth->add_option("--length", sy.length, "rain streak length");
    synth->add_option("--angle", sy.angle, "rain streak angle, degrees");
    synth->add_option("--intensity", sy.intensity, "rain streak brightness");

    // ---- shared model flags ----
    struct ModelFlags {
        int64_t base_channels = 16;
        bool no_smoothed = false, no_gate = false, no_edge = false;
        std::string norm = "instance";
        ModelConfig build() const {
            ModelConfig mc;
            mc.base_channels = base_channels;
            mc.use_smoothed_dilation = !no_smoothed;
            mc.use_gated_fusion = !no_gate;
            mc.use_edge_channel = !no_edge;
            mc.norm_kind = norm_from_flag(norm);
            return mc;
        }
    };
    auto add_model_flags = [](CLI::App* cmd, ModelFlags& mf) {
        cmd->add_option("--base-channels", mf.base_channels, "encoder channel width");
        cmd->add_flag("--no-smoothed", mf.no_smoothed, "disable shared smoothing convs");
        cmd->add_flag("--no-gate", mf.no_gate, "average taps instead of gated fusion");
        cmd->add_flag("--no-edge", mf.no_edge, "drop the edge input channel");
        cmd->add_option("--norm", mf.norm, "instance | batch | none");
    };

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a model on a pair set");
    struct {
        std::string data, out, resume;
        int64_t epochs = 60, batch = 4, crop = 48;
        double lr = 0.01;
        uint64_t seed = 7;
        ModelFlags model;
    } tr;
    train_cmd->add_option("--data", tr.data, "pair-set directory")->required();
    train_cmd->add_option("--out", tr.out, "output directory")->required();
    train_cmd->add_option("--epochs", tr.epochs, "training epochs");
    train_cmd->add_option("--batch", tr.batch, "batch size");
    train_cmd->add_option("--crop", tr.crop, "random crop edge, 0 for full images");
    train_cmd->add_option("--lr", tr.lr, "initial learning rate");
    train_cmd->add_option("--seed", tr.seed, "training seed");
    train_cmd->add_option("--resume", tr.resume, "checkpoint to resume from");
    add_model_flags(train_cmd, tr.model);

    // ---- infer ----
    auto* infer = app.add_subcommand("infer", "restore images with a trained model");
    struct {
        std::string in, ckpt, out;
    } in_;
    infer->add_option("--in", in_.in, "input PNG or directory")->required();
    infer->add_option("--ckpt", in_.ckpt, "model checkpoint")->required();
    infer->add_option("--out", in_.out, "output directory")->required();

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "score restored images against clean ones");
    struct {
        std::string data, ckpt, a, b, csv;
    } ev;
    eval_cmd->add_option("--data", ev.data, "pair-set directory (scores corrupted vs clean)");
    eval_cmd->add_option("--ckpt", ev.ckpt, "restore with this checkpoint before scoring");
    eval_cmd->add_option("--a", ev.a, "directory of images to score");
    eval_cmd->add_option("--b", ev.b, "directory of reference images");
    eval_cmd->add_option("--csv", ev.csv, "also write the table to this CSV");

    // ---- analyze ----
    auto* analyze = app.add_subcommand("analyze", "dependency/gridding analysis of a layer chain");
    struct {
        std::string chain = "sd3x2,sd3x2,sd3x2,sd3x4,sd3x4,sd3x4,d3x1";
        std::string rf, json_out;
        std::vector<int64_t> indices{0, 1, 2};
    } an;
    analyze->add_option("--chain", an.chain, "chain spec, e.g. d3x2,sd3x4");
    analyze->add_option("--rf", an.rf, "print only the receptive field of this chain");
    analyze->add_option("--indices", an.indices, "output indices to analyze");
    analyze->add_option("--json", an.json_out, "write the JSON report here");

    // ---- ablate ----
    auto* ablate = app.add_subcommand("ablate", "train the 4 incremental configurations");
    struct {
        std::string data, out;
        int64_t epochs = 10, batch = 4, crop = 48, base_channels = 8;
        uint64_t seed = 7;
    } ab;
    ablate->add_option("--data", ab.data, "pair-set directory")->required();
    ablate->add_option("--out", ab.out, "output directory")->required();
    ablate->add_option("--epochs", ab.epochs, "epochs per configuration");
    ablate->add_option("--batch", ab.batch, "batch size");
    ablate->add_option("--crop", ab.crop, "random crop edge");
    ablate->add_option("--base-channels", ab.base_channels, "encoder channel width");
    ablate->add_option("--seed", ab.seed, "shared seed across the 4 runs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitFlags;
    }

    (void)thread_cap();  // reserved: all current paths are single-threaded

    try {
        if (synth->parsed()) {
            PairSetOptions opt;
            opt.count = sy.count;
            opt.size = sy.size;
            opt.seed = sy.seed;
            opt.kind = sy.rain ? CorruptionKind::rain : CorruptionKind::haze;
            opt.haze.mode = transmission_mode_from(sy.mode);
            opt.haze.beta = sy.beta;
            opt.haze.t0 = sy.t0;
            opt.rain.density = sy.density;
            opt.rain.length = sy.length;
            opt.rain.angle_deg = sy.angle;
            opt.rain.intensity = sy.intensity;
            write_run_meta(sy.out, "synth",
                           {{"out", sy.out},
                            {"count", std::to_string(sy.count)},
                            {"size", std::to_string(sy.size)},
                            {"mode", sy.rain ? "rain" : sy.mode},
                            {"seed", std::to_string(sy.seed)},
                            {"beta", std::to_string(sy.beta)},
                            {"t0", std::to_string(sy.t0)},
                            {"density", std::to_string(sy.density)},
                            {"length", std::to_string(sy.length)},
                            {"angle", std::to_string(sy.angle)},
                            {"intensity", std::to_string(sy.intensity)}});
            std::cout << "manifest: " << write_pair_set(sy.out, opt) << "\n";
        } else if (train_cmd->parsed()) {
            if (!fs::exists(tr.data)) throw IoError("dataset not found: " + tr.data);
            TrainConfig cfg;
            cfg.epochs = tr.epochs;
            cfg.batch_size = tr.batch;
            cfg.crop = tr.crop;
            cfg.lr0 = tr.lr;
            cfg.seed = tr.seed;
            ModelConfig mc = tr.model.build();
            if (!tr.resume.empty() && !fs::exists(tr.resume))
                throw IoError("resume checkpoint not found: " + tr.resume);
            write_run_meta(tr.out, "train",
                           {{"data", tr.data},
                            {"out", tr.out},
                            {"epochs", std::to_string(tr.epochs)},
                            {"batch", std::to_string(tr.batch)},
                            {"crop", std::to_string(tr.crop)},
                            {"lr", std::to_string(tr.lr)},
                            {"seed", std::to_string(tr.seed)},
                            {"resume", tr.resume},
                            {"model", mc.serialize()}});
            TrainResult r = train(mc, cfg, tr.data, tr.out, tr.resume);
            if (r.aborted_nan) {
                std::cerr << "training diverged; last good checkpoint kept\n";
                return 1;
            }
            std::cout << "best checkpoint: " << r.best_checkpoint
                      << " (val psnr " << r.best_val_psnr << " dB)\n";
        } else if (infer->parsed()) {
            GCANet model = load_model(in_.ckpt);
            const auto files = png_inputs(in_.in);
            write_run_meta(in_.out, "infer",
                           {{"in", in_.in}, {"ckpt", in_.ckpt}, {"out", in_.out}});
            for (const auto& f : files) {
                const Tensor restored = model.restore(read_png(f));
                write_png((fs::path(in_.out) / f.filename()).string(), restored);
            }
            std::cout << "restored " << files.size() << " image(s) into " << in_.out << "\n";
        } else if (eval_cmd->parsed()) {
            std::vector<std::string> names;
            EvalResult result;
            if (!ev.a.empty() || !ev.b.empty()) {
                if (ev.a.empty() || ev.b.empty())
                    throw CLI::ValidationError("--a/--b", "both directories are required");
                const auto files = png_inputs(ev.a);
                for (const auto& f : files) {
                    const fs::path ref = fs::path(ev.b) / f.filename();
                    if (!fs::exists(ref)) throw IoError("no reference image " + ref.string());
                    const Tensor x = read_png(f), y = read_png(ref);
                    result.psnr.push_back(psnr(x, y));
                    result.ssim.push_back(ssim(x, y));
                    names.push_back(f.filename());
                }
                result.mean_psnr = result.mean_ssim = 0.0;
                for (size_t i = 0; i < names.size(); ++i) {
                    result.mean_psnr += result.psnr[i] / names.size();
                    result.mean_ssim += result.ssim[i] / names.size();
                }
            } else {
                if (ev.data.empty())
                    throw CLI::ValidationError("--data", "required unless --a/--b are given");
                if (!fs::exists(ev.data)) throw IoError("dataset not found: " + ev.data);
                const auto rows = read_pair_set(ev.data);
                for (const auto& row : rows)
                    names.push_back(fs::path(row.corrupted_path).filename());
                if (ev.ckpt.empty()) {
                    result = evaluate_identity(rows);
                } else {
                    GCANet model = load_model(ev.ckpt);
                    result = evaluate(model, rows);
                }
            }
            print_eval_table(names, result, ev.csv);
        } else if (analyze->parsed()) {
            if (!an.rf.empty()) {
                std::cout << receptive_field(parse_chain(an.rf)) << "\n";
                return 0;
            }
            LayerChainSpec chain = parse_chain(an.chain);
            DependencyReport rep = dependency_sets(chain, an.indices);
            const std::string json = report_json(chain, rep);
            std::cout << json << "\n";
            if (!an.json_out.empty()) {
                std::ofstream out(an.json_out, std::ios::trunc);
                if (!out) throw IoError("cannot write " + an.json_out);
                out << json << "\n";
            }
        } else if (ablate->parsed()) {
            if (!fs::exists(ab.data)) throw IoError("dataset not found: " + ab.data);
            write_run_meta(ab.out, "ablate",
                           {{"data", ab.data},
                            {"out", ab.out},
                            {"epochs", std::to_string(ab.epochs)},
                            {"batch", std::to_string(ab.batch)},
                            {"crop", std::to_string(ab.crop)},
                            {"base_channels", std::to_string(ab.base_channels)},
                            {"seed", std::to_string(ab.seed)}});
            // incremental configurations, one component added per row
            struct Row {
                const char* tag;
                bool smoothed, gated;
                NormKind norm;
            };
            const Row grid[4] = {{"baseline_bn", false, false, NormKind::batch},
                                 {"smoothed_bn", true, false, NormKind::batch},
                                 {"smoothed_gated_bn", true, true, NormKind::batch},
                                 {"smoothed_gated_in", true, true, NormKind::instance}};
            std::ofstream csv(fs::path(ab.out) / "ablation.csv", std::ios::trunc);
            if (!csv) throw IoError("cannot write ablation.csv in " + ab.out);
            csv << "config,smoothed,gated,norm,val_psnr,final_loss\n";
            for (const Row& row : grid) {
                ModelConfig mc;
                mc.base_channels = ab.base_channels;
                mc.use_smoothed_dilation = row.smoothed;
                mc.use_gated_fusion = row.gated;
                mc.norm_kind = row.norm;
                TrainConfig cfg;
                cfg.epochs = ab.epochs;
                cfg.batch_size = ab.batch;
                cfg.crop = ab.crop;
                cfg.seed = ab.seed;
                const std::string run_dir = (fs::path(ab.out) / row.tag).string();
                TrainResult r = train(mc, cfg, ab.data, run_dir);
                csv << row.tag << "," << (row.smoothed ? 1 : 0) << "," << (row.gated ? 1 : 0)
                    << "," << (row.norm == NormKind::instance ? "instance" : "batch") << ","
                    << r.best_val_psnr << "," << r.final_epoch_loss << "\n";
                std::cout << row.tag << ": val psnr " << r.best_val_psnr << " dB\n";
            }
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFlags;
    } catch (const MismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFlags;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return 0;
}
