#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cosal/cosal.hpp"

using namespace cosal;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "cosal_cli_tests";

int run(const std::string& args) {
    const std::string cmd = std::string(COSAL_CLI_PATH) + " " + args + " >>" + (kRoot / "cli.log").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = kRoot / name;
    std::ofstream(p) << text;
    return p;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
        ASSERT_EQ(run("synth --count 12 --side 64 --seed 5 --out " + (kRoot / "train").string()), 0);
        ASSERT_EQ(run("synth --count 6 --side 64 --seed 77 --out " + (kRoot / "held").string()), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(kRoot); }
    static fs::path p(const std::string& rel) { return kRoot / rel; }
};

}  // namespace

TEST_F(Cli, SynthIsReproducibleAndLoadable) {
    ASSERT_EQ(run("synth --count 12 --side 64 --seed 5 --out " + p("train_again").string()), 0);
    EXPECT_EQ(tree(p("train")), tree(p("train_again")));
    const auto loaded = load_dataset(p("train"));
    EXPECT_TRUE(loaded.diagnostics.empty());
    EXPECT_EQ(loaded.samples.size(), 12u);
    EXPECT_NE(run("synth --count 2 --side 16 --out " + p("tiny").string()), 0);
}

TEST_F(Cli, GradcheckPasses) { EXPECT_EQ(run("gradcheck --seeds 2"), 0); }

TEST_F(Cli, UsageErrors) {
    EXPECT_NE(run(""), 0);
    EXPECT_NE(run("train --mode sideways --data x --out y"), 0);
    EXPECT_NE(run("predict --input " + p("held/images").string()), 0);  // no checkpoint
}

TEST_F(Cli, TrainRejectsInvalidDataset) {
    fs::copy(p("train"), p("broken"), fs::copy_options::recursive);
    fs::remove(p("broken/masks/s00003_0.png"));
    EXPECT_EQ(run("train --data " + p("broken").string() + " --out " + p("broken_run").string()), 2);
    EXPECT_FALSE(fs::exists(p("broken_run/checkpoint.csk")));
    fs::create_directories(p("empty"));
    EXPECT_EQ(run("train --data " + p("empty").string() + " --out " + p("empty_run").string()), 2);
}

TEST_F(Cli, ModesAndResume) {
    const auto cfg = write_config("short.cfg", "iterations = 6\ncheckpoint_every = 2\nseed = 3\n");
    const std::string base = "train --config " + cfg.string() + " --data " + p("train").string();
    ASSERT_EQ(run(base + " --mode offline --out " + p("offline").string()), 0);
    ASSERT_EQ(run(base + " --mode online --out " + p("online").string()), 0);
    const auto off = read_loss_log(p("offline/loss_log.csv")), on = read_loss_log(p("online/loss_log.csv"));
    ASSERT_EQ(off.size(), 6u);
    ASSERT_EQ(on.size(), 6u);
    bool differ = false;
    for (std::size_t i = 0; i < off.size(); ++i) differ = differ || off[i].losses.rfm != on[i].losses.rfm;
    EXPECT_TRUE(differ);

    ASSERT_EQ(run(base + " --mode online --stop-at 3 --out " + p("resumed").string()), 0);
    EXPECT_EQ(read_loss_log(p("resumed/loss_log.csv")).size(), 3u);
    ASSERT_EQ(run(base + " --mode online --out " + p("resumed").string()), 0);
    const auto rows = read_loss_log(p("resumed/loss_log.csv"));
    ASSERT_EQ(rows.size(), 6u);
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].iteration, i + 1);
    EXPECT_EQ(slurp(p("resumed/loss_log.csv")), slurp(p("online/loss_log.csv")));
    EXPECT_EQ(slurp(p("resumed/checkpoint.csk")), slurp(p("online/checkpoint.csk")));
}

TEST_F(Cli, PredictRejectsCorruptCheckpoint) {
    std::ofstream(p("bad.csk"), std::ios::binary) << "NOPE0000";
    EXPECT_NE(run("predict --checkpoint " + p("bad.csk").string() + " --input " + p("held/images").string() +
                  " --out " + p("bad_pred").string()),
              0);
}

TEST_F(Cli, PredictAndEvaluate) {
    const auto cfg = write_config("learn.cfg", "iterations = 300\ncheckpoint_every = 0\nseed = 1\n");
    ASSERT_EQ(run("train --config " + cfg.string() + " --data " + p("train").string() + " --out " + p("learn").string()),
              0);
    const std::string ckpt = p("learn/checkpoint.csk").string();

    // Inputs of a different size are resized in and out.
    fs::create_directories(p("odd"));
    const Image8 first = read_png(p("held/images/s00000.png").string(), 3);
    write_png(p("odd/s00000.png").string(), to_image8(resize_bilinear(from_image8(first), 48, 80)));
    ASSERT_EQ(run("predict --checkpoint " + ckpt + " --input " + p("odd").string() + " --out " + p("odd_pred").string()),
              0);
    const Image8 odd = read_png(p("odd_pred/s00000.png").string(), 1);
    EXPECT_EQ(odd.width, 80u);
    EXPECT_EQ(odd.height, 48u);

    ASSERT_EQ(run("predict --checkpoint " + ckpt + " --input " + p("held/images").string() + " --out " + p("pred").string()),
              0);
    ASSERT_EQ(run("predict --checkpoint " + ckpt + " --input " + p("held/images").string() + " --out " + p("pred2").string()),
              0);
    EXPECT_EQ(tree(p("pred")), tree(p("pred2")));

    // Salient pixels score higher than background after a short run.
    double fg = 0, bg = 0;
    std::size_t nf = 0, nb = 0;
    std::vector<std::vector<float>> preds;
    std::vector<std::vector<std::uint8_t>> truths;
    for (const auto& s : load_dataset(p("held")).samples) {
        const Image8 img = read_png(p("pred/" + s.id + ".png").string(), 1);
        ASSERT_EQ(img.pixels.size(), s.mask.size());
        preds.emplace_back();
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            const double v = img.pixels[i] / 255.0;
            preds.back().push_back(float(img.pixels[i]) / 255.0f);
            (s.mask[i] ? fg : bg) += v;
            ++(s.mask[i] ? nf : nb);
        }
        truths.push_back(s.mask);
    }
    EXPECT_GT(fg / double(nf), bg / double(nb));

    ASSERT_EQ(run("evaluate --pred " + p("pred").string() + " --gt " + p("held/gt").string() + " --out " +
                  p("report").string()),
              0);
    const auto report = nlohmann::json::parse(std::ifstream(p("report/report.json")));
    const auto expected = evaluate_dataset(preds, truths);
    EXPECT_EQ(report["mae"].get<double>(), expected.mae);
    EXPECT_EQ(report["f_measure"].get<double>(), expected.f_measure);
    EXPECT_EQ(report["images"].get<std::size_t>(), 6u);
    EXPECT_TRUE(fs::exists(p("report/report.txt")));
    const std::string csv = slurp(p("report/pr_curve.csv"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 257);
}

TEST_F(Cli, EvaluateIdentityInversionAndMismatch) {
    ASSERT_EQ(run("evaluate --pred " + p("held/gt").string() + " --gt " + p("held/gt").string() + " --out " +
                  p("ident").string()),
              0);
    auto j = nlohmann::json::parse(std::ifstream(p("ident/report.json")));
    EXPECT_EQ(j["mae"].get<double>(), 0.0);
    EXPECT_EQ(j["f_measure"].get<double>(), 1.0);

    fs::create_directories(p("inverted"));
    for (const auto& e : fs::directory_iterator(p("held/gt"))) {
        Image8 img = read_png(e.path().string(), 1);
        for (auto& v : img.pixels) v = 255 - v;
        write_png((p("inverted") / e.path().filename()).string(), img);
    }
    ASSERT_EQ(run("evaluate --pred " + p("inverted").string() + " --gt " + p("held/gt").string() + " --out " +
                  p("inv").string()),
              0);
    j = nlohmann::json::parse(std::ifstream(p("inv/report.json")));
    EXPECT_EQ(j["f_measure"].get<double>(), 0.0);
    EXPECT_EQ(j["mae"].get<double>(), 1.0);

    fs::remove(p("inverted/s00002.png"));
    EXPECT_EQ(run("evaluate --pred " + p("inverted").string() + " --gt " + p("held/gt").string() + " --out " +
                  p("mismatch").string()),
              2);
}
