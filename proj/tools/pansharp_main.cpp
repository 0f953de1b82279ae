// pansharp: operator-facing entry point for the pan-sharpening toolkit.
//
// Subcommands: degrade | train | infer | eval | grad-check | bench.
// Exit codes: 0 ok, 1 usage, 2 data/format, 3 numeric failure.
// PANSHARP_THREADS caps OpenMP worker parallelism.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

#include "pansharp/gradcheck.hpp"
#include "pansharp/png_io.hpp"
#include "pansharp/trainer.hpp"

namespace fs = std::filesystem;
using namespace pansharp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

template <typename T>
Tensor<T> load_any_image(const fs::path& path) {
    if (path.extension() == ".png") {
        PngImage img = load_png(path.string());
        Tensor<T> t({img.channels, img.height, img.width});
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(img.data[static_cast<size_t>(i)]);
        return t;
    }
    return load_image_raw<T>(path.string());
}

int cmd_degrade(const std::string& hrms_dir, const std::string& pan_dir, int64_t scale,
                const std::string& out_dir) {
    for (const char* sub : {"pan", "lrms", "gt"}) fs::create_directories(fs::path(out_dir) / sub);
    int failures = 0, written = 0;
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(hrms_dir))
        if (e.is_regular_file()) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& ms_path : entries) {
        const std::string stem = ms_path.stem().string();
        fs::path pan_path;
        for (const char* ext : {".pmt", ".png"}) {
            fs::path cand = fs::path(pan_dir) / (stem + ext);
            if (fs::exists(cand)) pan_path = cand;
        }
        try {
            if (pan_path.empty()) throw FormatError("no matching pan file for '" + stem + "'");
            Tensor<float> hrms = load_any_image<float>(ms_path);
            Tensor<float> hrpan = load_any_image<float>(pan_path);
            ImageTriple<float> t = wald_degrade(hrms, hrpan, scale);
            save_raw((fs::path(out_dir) / "pan" / (stem + ".pmt")).string(), t.pan);
            save_raw((fs::path(out_dir) / "lrms" / (stem + ".pmt")).string(), t.lrms);
            save_raw((fs::path(out_dir) / "gt" / (stem + ".pmt")).string(), t.gt);
            ++written;
        } catch (const std::exception& e) {
            std::cerr << "degrade: " << ms_path.filename().string() << ": " << e.what() << "\n";
            ++failures;
        }
    }
    std::cout << "degrade: wrote " << written << " triples to " << out_dir << "\n";
    if (written == 0 && failures == 0) {
        std::cerr << "degrade: no input files found in " << hrms_dir << "\n";
        return kExitData;
    }
    return failures ? kExitData : kExitOk;
}

template <typename T>
std::vector<ImageTriple<T>> load_dataset(const std::string& dir) {
    std::vector<ImageTriple<T>> out;
    const fs::path pan_dir = fs::path(dir) / "pan";
    if (!fs::is_directory(pan_dir))
        throw FormatError("dataset: '" + dir + "' does not contain a pan/ directory");
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(pan_dir))
        if (e.is_regular_file() && e.path().extension() == ".pmt") entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
        const std::string name = p.filename().string();
        ImageTriple<T> t;
        t.pan = load_image_raw<T>(p.string());
        t.lrms = load_image_raw<T>((fs::path(dir) / "lrms" / name).string());
        const fs::path gt = fs::path(dir) / "gt" / name;
        if (fs::exists(gt)) t.gt = load_image_raw<T>(gt.string());
        out.push_back(std::move(t));
    }
    if (out.empty()) throw FormatError("dataset: no .pmt files under '" + dir + "/pan'");
    return out;
}

template <typename T>
int run_train(const NetworkConfig& net, const TrainConfig& tc, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume) {
    std::vector<ImageTriple<T>> dataset = load_dataset<T>(data_dir);
    PanMambaModel<T> model =
        resume.empty() ? init_model<T>(net, tc.seed) : load_checkpoint<T>(resume);
    fs::create_directories(out_dir);

    const int64_t print_every = std::max<int64_t>(1, tc.epochs / 10);
    TrainLog log = train(model, dataset, tc, [&](const StepRecord& r) {
        if (r.epoch % print_every == 0 || r.epoch == tc.epochs - 1)
            std::cout << "epoch " << r.epoch << " step " << r.step << " lr " << r.lr << " loss " << r.loss
                      << "\n";
    });

    save_checkpoint(model, (fs::path(out_dir) / "checkpoint.pmck").string());
    std::ofstream csv(fs::path(out_dir) / "log.csv");
    csv << log.to_csv();
    std::cout << "train: final loss " << log.steps.back().loss << ", checkpoint and log written to " << out_dir
              << "\n";
    return kExitOk;
}

template <typename T>
int run_infer(const std::string& ckpt, const std::string& pan_path, const std::string& lrms_path,
              const std::string& out_path, const std::string& png_path) {
    PanMambaModel<T> model = load_checkpoint<T>(ckpt);
    Tensor<T> pan = load_image_raw<T>(pan_path);
    Tensor<T> lrms = load_image_raw<T>(lrms_path);
    if (pan.rank() != 3 || lrms.rank() != 3) throw FormatError("infer: inputs must be rank-3 [bands,H,W]");
    Tensor<T> out = forward(model, pan.reshaped({1, pan.dim(0), pan.dim(1), pan.dim(2)}),
                            lrms.reshaped({1, lrms.dim(0), lrms.dim(1), lrms.dim(2)}));
    Tensor<T> fused = out.reshaped({out.dim(1), out.dim(2), out.dim(3)});
    save_raw(out_path, fused);
    if (!png_path.empty()) {
        const int64_t bands = fused.dim(0) >= 3 ? 3 : 1;  // RGB preview or grayscale
        std::vector<float> buf(static_cast<size_t>(bands * fused.dim(1) * fused.dim(2)));
        for (int64_t i = 0; i < static_cast<int64_t>(buf.size()); ++i)
            buf[static_cast<size_t>(i)] = static_cast<float>(fused.data()[i]);
        save_png(png_path, buf.data(), bands, fused.dim(1), fused.dim(2), 16);
    }
    std::cout << "infer: wrote " << shape_str(fused.shape()) << " to " << out_path << "\n";
    return kExitOk;
}

template <typename T>
int run_eval(const std::string& pred_path, const std::string& gt_path, bool full_res,
             const std::string& pan_path, const std::string& lrms_path, int64_t scale,
             const std::string& csv_path) {
    MetricsReport rep;
    Tensor<T> pred = load_image_raw<T>(pred_path);
    if (!full_res) {
        Tensor<T> gt = load_image_raw<T>(gt_path);
        rep = reference_metrics(pred, gt, scale);
    } else {
        Tensor<T> pan = load_image_raw<T>(pan_path);
        Tensor<T> lrms = load_image_raw<T>(lrms_path);
        QnrResult q = qnr(pred, lrms, pan, scale);
        rep.has_no_reference = true;
        rep.d_lambda = q.d_lambda;
        rep.d_s = q.d_s;
        rep.qnr = q.qnr;
    }
    std::cout << rep.to_kv();
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        csv << MetricsReport::csv_header() << "\n" << rep.to_csv_row() << "\n";
    }
    return kExitOk;
}

int cmd_grad_check(bool use_double, uint64_t seed) {
    const double h = use_double ? 1e-5 : 1e-2;
    const double tol = use_double ? 1e-5 : 1e-3;
    std::vector<GradCheckReport> reports =
        use_double ? run_gradient_suite<double>(h, seed) : run_gradient_suite<float>(h, seed);
    double worst = 0.0;
    std::cout << "block               max_rel_err   scalars\n";
    for (const auto& r : reports) {
        std::cout << r.name;
        for (size_t i = r.name.size(); i < 20; ++i) std::cout << ' ';
        std::cout << r.max_rel_err << "   " << r.checked << "\n";
        worst = std::max(worst, r.max_rel_err);
    }
    std::cout << "max relative error " << worst << " (tolerance " << tol << ", "
              << (use_double ? "double" : "single") << " precision)\n";
    return worst < tol ? kExitOk : kExitNumeric;
}

int cmd_bench(const std::string& sizes_csv, uint64_t seed, const std::string& out_csv) {
    std::vector<int64_t> sizes;
    std::stringstream ss(sizes_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) sizes.push_back(std::stoll(item));
    }
    if (sizes.empty()) throw UsageError("bench: no sizes given");

    NetworkConfig cfg;  // calibrated defaults
    PanMambaModel<float> model = init_model<float>(cfg, seed);
    Rng rng(seed);

    std::ostringstream csv;
    csv << "size,pixels,seconds,flops,mem_bytes\n";
    std::cout << "size    pixels      seconds     flops         mem_est\n";
    for (int64_t s : sizes) {
        if (s % cfg.scale != 0) throw UsageError("bench: size must be divisible by the scale ratio");
        Tensor<float> pan({1, 1, s, s});
        Tensor<float> lrms({1, cfg.ms_bands, s / cfg.scale, s / cfg.scale});
        for (int64_t i = 0; i < pan.numel(); ++i) pan.data()[i] = static_cast<float>(rng.uniform());
        for (int64_t i = 0; i < lrms.numel(); ++i) lrms.data()[i] = static_cast<float>(rng.uniform());
        const auto t0 = std::chrono::steady_clock::now();
        Tensor<float> out = forward(model, pan, lrms);
        const auto t1 = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(t1 - t0).count();
        const int64_t flops = count_flops(model, s, s);
        const int64_t mem = estimate_forward_bytes(cfg, s, s, sizeof(float));
        (void)out;
        csv << s << "," << s * s << "," << secs << "," << flops << "," << mem << "\n";
        std::cout << s << "   " << s * s << "   " << secs << "   " << flops << "   " << mem << "\n";
    }
    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        f << csv.str();
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_env();
    CLI::App app{"Mamba-based pan-sharpening toolkit"};
    app.require_subcommand(1);

    // degrade
    auto* degrade = app.add_subcommand("degrade", "Synthesize reduced-resolution training triples");
    std::string hrms_dir, pan_dir, out_dir;
    int64_t scale = 4;
    degrade->add_option("--hrms", hrms_dir, "Directory of multispectral source images")->required();
    degrade->add_option("--pan", pan_dir, "Directory of matching pan images at scale x resolution")->required();
    degrade->add_option("--scale", scale, "Resolution ratio r");
    degrade->add_option("--out", out_dir, "Output dataset directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train on a degraded dataset");
    std::string config_path, data_dir, train_out, resume;
    uint64_t seed_flag = 0;
    bool seed_given = false;
    train_cmd->add_option("--config", config_path, "key=value configuration file")->required();
    train_cmd->add_option("--data", data_dir, "Dataset directory with pan/ lrms/ gt/")->required();
    train_cmd->add_option("--out", train_out, "Output directory for checkpoint and log")->required();
    train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
    train_cmd->add_option("--seed", seed_flag, "Override the config seed")->each([&](const std::string&) {
        seed_given = true;
    });

    // infer
    auto* infer = app.add_subcommand("infer", "Fuse one pan/lrms pair with a trained checkpoint");
    std::string ckpt, pan_file, lrms_file, out_file, png_file;
    infer->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    infer->add_option("--pan", pan_file, "Pan raw tensor [1,H,W]")->required();
    infer->add_option("--lrms", lrms_file, "LRMS raw tensor [S,H/r,W/r]")->required();
    infer->add_option("--out", out_file, "Output raw tensor path")->required();
    infer->add_option("--png", png_file, "Optional 16-bit PNG preview of the first bands");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score a fusion result");
    std::string pred_file, gt_file, eval_pan, eval_lrms, eval_csv;
    bool full_res = false;
    int64_t eval_scale = 4;
    eval_cmd->add_option("--pred", pred_file, "Predicted raw tensor")->required();
    eval_cmd->add_option("--gt", gt_file, "Ground-truth raw tensor (reduced-resolution mode)");
    eval_cmd->add_flag("--full-res", full_res, "No-reference mode (D_lambda, D_s, QNR)");
    eval_cmd->add_option("--pan", eval_pan, "Pan input (full-res mode)");
    eval_cmd->add_option("--lrms", eval_lrms, "LRMS input (full-res mode)");
    eval_cmd->add_option("--scale", eval_scale, "Resolution ratio r");
    eval_cmd->add_option("--csv", eval_csv, "Also write a CSV row");

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of all block gradients");
    bool gc_double = false;
    uint64_t gc_seed = 7;
    gc->add_flag("--double", gc_double, "Run in double precision (tolerance 1e-5)");
    gc->add_option("--seed", gc_seed, "Seed for inputs and weights");

    // bench
    auto* bench = app.add_subcommand("bench", "Forward-pass timing and analytic cost per input size");
    std::string sizes = "128,256,512,1024";
    std::string bench_csv;
    uint64_t bench_seed = 1;
    bench->add_option("--sizes", sizes, "Comma-separated pan sizes");
    bench->add_option("--out", bench_csv, "CSV output path");
    bench->add_option("--seed", bench_seed, "Seed for weights and inputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (degrade->parsed()) return cmd_degrade(hrms_dir, pan_dir, scale, out_dir);
        if (train_cmd->parsed()) {
            NetworkConfig net;
            TrainConfig tc;
            load_config_file(config_path, &net, &tc);
            net.validate();
            tc.validate();
            if (seed_given) tc.seed = seed_flag;
            return net.precision == Precision::kFloat64
                       ? run_train<double>(net, tc, data_dir, train_out, resume)
                       : run_train<float>(net, tc, data_dir, train_out, resume);
        }
        if (infer->parsed()) return run_infer<float>(ckpt, pan_file, lrms_file, out_file, png_file);
        if (eval_cmd->parsed()) {
            if (!full_res && gt_file.empty())
                throw UsageError("eval: --gt is required unless --full-res is given");
            if (full_res && (eval_pan.empty() || eval_lrms.empty()))
                throw UsageError("eval: --full-res needs --pan and --lrms");
            return run_eval<double>(pred_file, gt_file, full_res, eval_pan, eval_lrms, eval_scale, eval_csv);
        }
        if (gc->parsed()) return cmd_grad_check(gc_double, gc_seed);
        if (bench->parsed()) return cmd_bench(sizes, bench_seed, bench_csv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {  // dimension/config/format
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
