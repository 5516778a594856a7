// Command-line front end: train, predict, evaluate, synth, gradcheck.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cosal/cosal.hpp"

namespace fs = std::filesystem;
using namespace cosal;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string out;
};

RunConfig resolve_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.mode.empty()) cfg.train.mode = parse_mode(c.mode);
    if (!c.out.empty()) cfg.out = c.out;
    return cfg;
}

std::vector<fs::path> png_files(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void require_dir(const std::string& path, const char* what) {
    if (path.empty()) throw std::runtime_error(std::string("missing ") + what);
    if (!fs::is_directory(path)) throw std::runtime_error(std::string(what) + " does not exist: " + path);
}

int cmd_train(const Common& common, const std::string& data, std::optional<std::size_t> stop_at) {
    RunConfig cfg = resolve_config(common);
    if (!data.empty()) cfg.data = data;
    require_dir(cfg.data, "dataset directory");
    if (cfg.out.empty()) throw std::runtime_error("missing output directory (--out or 'out' in config)");
    LoadResult loaded = load_dataset(cfg.data);
    if (!loaded.diagnostics.empty()) {
        for (const auto& d : loaded.diagnostics) std::cerr << "error: " << d << '\n';
        std::cerr << loaded.diagnostics.size() << " invalid sample(s); refusing to train\n";
        return 2;
    }
    if (loaded.samples.empty()) {
        std::cerr << "error: " << cfg.data << ": dataset is empty\n";
        return 2;
    }
    const auto result = train_to_directory(cfg, std::move(loaded.samples), cfg.out, stop_at, [](const LogRow& r) {
        if (r.iteration % 100 == 0)
            std::cout << "iter " << r.iteration << " total " << r.losses.total << " decoder " << r.losses.decoder
                      << " rpn " << r.losses.rpn << " rfm " << r.losses.rfm << std::endl;
    });
    std::cout << "trained iterations " << result.first_iteration << ".." << result.last_iteration << " ("
              << result.rfm_empty_steps << " steps without a valid triplet); outputs in " << cfg.out << '\n';
    return 0;
}

int cmd_predict(const Common& common, const std::string& checkpoint, const std::string& input) {
    const RunConfig cfg = resolve_config(common);
    require_dir(input, "input directory");
    if (cfg.out.empty()) throw std::runtime_error("missing output directory (--out)");
    Network<float> net(cfg.network, cfg.seed);
    try {
        net.load(checkpoint);
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << checkpoint << ": " << e.what() << '\n';
        return 2;
    }
    fs::create_directories(cfg.out);
    const auto files = png_files(input);
    const std::size_t side = cfg.network.side;
    std::vector<std::string> errors(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        try {
            const Image8 img = read_png(files[i].string(), 3);
            const auto resized = resize_bilinear(from_image8(img), side, side);
            const auto p = net.predict(resized);
            const auto back = resize_bilinear(p.reshaped({1, side, side}), img.height, img.width);
            Image8 out{img.width, img.height, 1, std::vector<std::uint8_t>(img.width * img.height)};
            for (std::size_t k = 0; k < out.pixels.size(); ++k)
                out.pixels[k] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(double(back[k]), 0.0, 1.0)));
            write_png((fs::path(cfg.out) / files[i].filename()).string(), out);
        } catch (const std::exception& e) {
            errors[i] = files[i].string() + ": " + e.what();
        }
    });
    int rc = 0;
    for (const auto& e : errors)
        if (!e.empty()) {
            std::cerr << "error: " << e << '\n';
            rc = 2;
        }
    std::cout << "wrote " << files.size() << " saliency map(s) to " << cfg.out << '\n';
    return rc;
}

int cmd_evaluate(const Common& common, const std::string& pred_dir, const std::string& gt_dir) {
    const RunConfig cfg = resolve_config(common);
    require_dir(pred_dir, "prediction directory");
    require_dir(gt_dir, "ground-truth directory");
    if (cfg.out.empty()) throw std::runtime_error("missing output directory (--out)");
    std::set<std::string> preds, gts;
    for (const auto& p : png_files(pred_dir)) preds.insert(p.filename().string());
    for (const auto& p : png_files(gt_dir)) gts.insert(p.filename().string());
    std::vector<std::string> problems;
    for (const auto& n : preds)
        if (!gts.count(n)) problems.push_back(n + ": prediction has no ground truth");
    for (const auto& n : gts)
        if (!preds.count(n)) problems.push_back(n + ": ground truth has no prediction");
    if (!problems.empty()) {
        for (const auto& p : problems) std::cerr << "error: " << p << '\n';
        return 2;
    }
    const std::vector<std::string> names(preds.begin(), preds.end());
    std::vector<std::vector<float>> p(names.size());
    std::vector<std::vector<std::uint8_t>> y(names.size());
    std::vector<std::string> errors(names.size());
    parallel_for(names.size(), [&](std::size_t i) {
        try {
            const Image8 img = read_png((fs::path(pred_dir) / names[i]).string(), 1);
            std::size_t w = 0, h = 0;
            y[i] = read_mask_png((fs::path(gt_dir) / names[i]).string(), w, h);
            if (w != img.width || h != img.height)
                throw std::runtime_error("size " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                         " differs from ground truth " + std::to_string(w) + "x" + std::to_string(h));
            p[i].resize(img.pixels.size());
            for (std::size_t k = 0; k < p[i].size(); ++k) p[i][k] = float(img.pixels[k]) / 255.0f;
        } catch (const std::exception& e) {
            errors[i] = names[i] + ": " + e.what();
        }
    });
    bool failed = false;
    for (const auto& e : errors)
        if (!e.empty()) {
            std::cerr << "error: " << e << '\n';
            failed = true;
        }
    if (failed) return 2;
    const EvalReport report = evaluate_dataset(p, y);
    fs::create_directories(cfg.out);
    std::ofstream(fs::path(cfg.out) / "report.json") << to_json(report).dump(2) << '\n';
    std::ofstream(fs::path(cfg.out) / "report.txt") << to_text(report);
    std::ofstream(fs::path(cfg.out) / "pr_curve.csv") << pr_curve_csv(report);
    std::cout << to_text(report);
    return 0;
}

int cmd_synth(const Common& common, std::size_t count, std::size_t side) {
    const RunConfig cfg = resolve_config(common);
    if (cfg.out.empty()) throw std::runtime_error("missing output directory (--out)");
    if (side < 32) throw std::runtime_error("--side must be at least 32");
    save_dataset(cfg.out, synth_generate(count, side, cfg.seed));
    std::cout << "wrote " << count << " synthetic sample(s) of side " << side << " to " << cfg.out << '\n';
    return 0;
}

int cmd_gradcheck(const Common& common, std::size_t seeds) {
    const RunConfig cfg = resolve_config(common);
    bool ok = true;
    std::map<std::string, GradCheckReport> worst;
    for (std::size_t s = 0; s < seeds; ++s) {
        for (auto& [name, rep] : layer_grad_suite(cfg.seed + s)) {
            auto [it, inserted] = worst.try_emplace(name, rep);
            if (!inserted && (!rep.passed || rep.worst_error > it->second.worst_error)) it->second = rep;
        }
    }
    for (const auto& [name, rep] : worst) {
        std::cout << (rep.passed ? "PASS " : "FAIL ") << name << " worst relative error " << rep.worst_error;
        if (!rep.passed) std::cout << " at " << rep.worst_location;
        std::cout << " (tolerance " << rep.tolerance << ", " << seeds << " seeds)\n";
        ok = ok && rep.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Within-image co-saliency detection: training, inference and evaluation"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "root random seed (overrides config)");
        sub->add_option("--mode", common.mode, "triplet sampling strategy")->check(CLI::IsMember({"offline", "online"}));
        sub->add_option("--out", common.out, "output directory (overrides config)");
    };

    std::string data, checkpoint, input, pred_dir, gt_dir;
    std::optional<std::size_t> stop_at;
    std::size_t count = 200, side = 64, seeds = 20;

    auto* train = app.add_subcommand("train", "train on a dataset directory");
    add_common(train);
    train->add_option("--data", data, "dataset root (overrides config)");
    train->add_option("--stop-at", stop_at, "stop after this iteration (the run can be resumed)");

    auto* predict = app.add_subcommand("predict", "write saliency maps for every PNG in a directory");
    add_common(predict);
    predict->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    predict->add_option("--input", input, "directory of input PNG images")->required();

    auto* evaluate = app.add_subcommand("evaluate", "score predicted maps against ground-truth masks");
    add_common(evaluate);
    evaluate->add_option("--pred", pred_dir, "directory of predicted maps")->required();
    evaluate->add_option("--gt", gt_dir, "directory of ground-truth masks")->required();

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth);
    synth->add_option("--count", count, "number of images");
    synth->add_option("--side", side, "image side in pixels");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every layer");
    add_common(gradcheck);
    gradcheck->add_option("--seeds", seeds, "random seeds per layer");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return cmd_train(common, data, stop_at);
        if (*predict) return cmd_predict(common, checkpoint, input);
        if (*evaluate) return cmd_evaluate(common, pred_dir, gt_dir);
        if (*synth) return cmd_synth(common, count, side);
        if (*gradcheck) return cmd_gradcheck(common, seeds);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
