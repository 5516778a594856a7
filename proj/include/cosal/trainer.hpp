#pragma once

// Single-image SGD training loop with periodic checkpoints and a CSV loss log.
// Each iteration draws its own generator from (seed, iteration), so a resumed
// run replays exactly the draws an uninterrupted run would have made.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cosal/config.hpp"
#include "cosal/data.hpp"
#include "cosal/network.hpp"

namespace cosal {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::mt19937_64 iteration_rng(std::uint64_t seed, std::size_t iteration) {
    std::seed_seq seq{std::uint32_t(seed & 0xFFFFFFFFu), std::uint32_t(seed >> 32), std::uint32_t(iteration),
                      std::uint32_t(std::uint64_t(iteration) >> 32), 0x7261696eu};
    return std::mt19937_64(seq);
}

struct LogRow {
    std::size_t iteration = 0;
    LossBreakdown losses;
};

inline std::string format_log_row(const LogRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", r.iteration, r.losses.decoder, r.losses.rpn,
                  r.losses.rfm, r.losses.total);
    return buf;
}

inline constexpr const char* kLogHeader = "iteration,decoder,rpn,rfm,total";

inline std::vector<LogRow> read_loss_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TrainingError("cannot open loss log: " + path.string());
    std::vector<LogRow> rows;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        LogRow r;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &r.iteration, &r.losses.decoder, &r.losses.rpn,
                        &r.losses.rfm, &r.losses.total) != 5)
            throw TrainingError("malformed loss log line: " + line);
        rows.push_back(r);
    }
    return rows;
}

/// Mean of the last min(window, i) totals up to and including iteration i (1-based).
inline double trailing_mean(const std::vector<double>& totals, std::size_t i, std::size_t window = 500) {
    if (i == 0 || i > totals.size()) throw std::out_of_range("trailing_mean: iteration out of range");
    const std::size_t begin = i > window ? i - window : 0;
    double acc = 0.0;
    for (std::size_t k = begin; k < i; ++k) acc += totals[k];
    return acc / double(i - begin);
}

class Trainer {
public:
    Trainer(RunConfig config, std::vector<Sample> samples)
        : config_(std::move(config)), samples_(std::move(samples)), net_(config_.network, config_.seed) {
        if (samples_.empty()) throw TrainingError("training set is empty");
        for (const auto& s : samples_)
            if (s.width != config_.network.side || s.height != config_.network.side)
                throw TrainingError("sample '" + s.id + "' is " + std::to_string(s.width) + "x" +
                                    std::to_string(s.height) + ", network side is " +
                                    std::to_string(config_.network.side));
    }

    Network<float>& network() { return net_; }
    const Network<float>& network() const { return net_; }
    const RunConfig& config() const { return config_; }
    std::size_t iteration() const { return iteration_; }
    std::size_t rfm_empty_steps() const { return rfm_empty_; }

    void restore(std::size_t iteration, std::size_t rfm_empty) {
        iteration_ = iteration;
        rfm_empty_ = rfm_empty;
    }

    LogRow step() {
        const std::size_t it = iteration_ + 1;
        auto rng = iteration_rng(config_.seed, it);
        std::uniform_int_distribution<std::size_t> pick(0, samples_.size() - 1);
        const Sample& base = samples_[pick(rng)];
        const auto ex = config_.augment ? to_training_example<float>(augment(base, rng))
                                        : to_training_example<float>(base);
        const StepStats st = net_.train_step(ex, config_.options_at(it), rng);
        if (st.rfm_empty) ++rfm_empty_;
        iteration_ = it;
        return {it, st.losses};
    }

private:
    RunConfig config_;
    std::vector<Sample> samples_;
    Network<float> net_;
    std::size_t iteration_ = 0;
    std::size_t rfm_empty_ = 0;
};

struct TrainRunResult {
    std::size_t first_iteration = 0;  // 1-based iteration this invocation started at
    std::size_t last_iteration = 0;
    std::size_t rfm_empty_steps = 0;
};

struct TrainOutputs {
    std::filesystem::path dir;
    std::filesystem::path checkpoint() const { return dir / "checkpoint.csk"; }
    std::filesystem::path log() const { return dir / "loss_log.csv"; }
    std::filesystem::path state() const { return dir / "train_state.json"; }
};

/// Trains into `out_dir`, resuming from an existing checkpoint there. `stop_at`
/// ends the run early (after a checkpoint) to emulate an interruption.
inline TrainRunResult train_to_directory(const RunConfig& cfg, std::vector<Sample> samples,
                                         const std::filesystem::path& out_dir,
                                         std::optional<std::size_t> stop_at = std::nullopt,
                                         const std::function<void(const LogRow&)>& on_step = {}) {
    namespace fs = std::filesystem;
    const TrainOutputs files{out_dir};
    fs::create_directories(out_dir);
    Trainer trainer(cfg, std::move(samples));

    std::vector<LogRow> kept;
    if (fs::exists(files.state()) && fs::exists(files.checkpoint())) {
        std::ifstream in(files.state());
        const auto state = nlohmann::json::parse(in);
        if (state.at("seed").get<std::uint64_t>() != cfg.seed)
            throw TrainingError("existing run in " + out_dir.string() + " used a different seed");
        const auto it = state.at("iteration").get<std::size_t>();
        trainer.network().load(files.checkpoint().string());
        trainer.restore(it, state.value("rfm_empty_steps", std::size_t{0}));
        if (fs::exists(files.log()))
            for (const auto& r : read_loss_log(files.log()))
                if (r.iteration <= it) kept.push_back(r);
        if (kept.size() != it) throw TrainingError("loss log does not cover the checkpointed iterations");
    }

    std::ofstream log(files.log(), std::ios::trunc);
    if (!log) throw TrainingError("cannot write loss log: " + files.log().string());
    log << kLogHeader << '\n';
    for (const auto& r : kept) log << format_log_row(r) << '\n';

    const auto checkpoint = [&] {
        log.flush();
        trainer.network().save(files.checkpoint().string());
        nlohmann::ordered_json state;
        state["iteration"] = trainer.iteration();
        state["seed"] = cfg.seed;
        state["rfm_empty_steps"] = trainer.rfm_empty_steps();
        std::ofstream(files.state()) << state.dump(2) << '\n';
    };

    TrainRunResult result;
    result.first_iteration = trainer.iteration() + 1;
    const std::size_t end = std::min(cfg.optimizer.iterations, stop_at.value_or(cfg.optimizer.iterations));
    while (trainer.iteration() < end) {
        const LogRow row = trainer.step();
        log << format_log_row(row) << '\n';
        if (on_step) on_step(row);
        if (cfg.optimizer.checkpoint_every && row.iteration % cfg.optimizer.checkpoint_every == 0) checkpoint();
    }
    checkpoint();
    result.last_iteration = trainer.iteration();
    result.rfm_empty_steps = trainer.rfm_empty_steps();
    return result;
}

}  // namespace cosal
