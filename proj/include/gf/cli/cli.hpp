#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// Command layer: sectioned run configuration, subcommand implementations,
// run manifests, and prerequisite/hash gating. The `glyphflow` binary is a
// thin argument-parsing shell over these functions.
namespace gf::cli {

// Exit codes, one per error family (main maps exceptions onto these).
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;        // config validation failure
inline constexpr int kExitPrerequisite = 3;  // missing dataset / checkpoint
inline constexpr int kExitHashMismatch = 4;  // artifact hashes disagree
inline constexpr int kExitRuntime = 5;       // anything else

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error("ConfigError: " + m) {}
};

struct MissingPrerequisite : std::runtime_error {
    explicit MissingPrerequisite(const std::string& m)
        : std::runtime_error("MissingPrerequisite: " + m) {}
};

struct HashMismatch : std::runtime_error {
    explicit HashMismatch(const std::string& m) : std::runtime_error("HashMismatch: " + m) {}
};

struct DataConfig {
    int64_t width = 64, height = 64;
    int pairs = 200;
    int regions = 2;
};

struct CodecTrainConfig {
    int64_t f = 4, c = 4, width = 32;
    int epochs = 12;
    int64_t batch = 8;
    float lr = 2e-3f;
    double psnr_threshold = 30.0;
    int train_images = 300;
    int eval_images = 32;
};

struct RecognizerTrainConfig {
    int64_t width = 16;
    int epochs = 8;
    int64_t batch = 32;
    float lr = 2e-3f;
    int train = 4000, eval = 400;
    int max_len = 6;
    double accuracy_threshold = 0.99;
};

struct EmbedderTrainConfig {
    int64_t width = 16, embed_dim = 64;
    int epochs = 8;
    int64_t batch = 32;
    float lr = 2e-3f;
    int train = 4000, eval = 400;
    double accuracy_threshold = 0.95;
};

struct DetectorTrainConfig {
    int64_t width = 8;
    int epochs = 6;
    int64_t batch = 8;
    float lr = 2e-3f;
    int train = 400;
    double threshold = 0.5;
};

struct PerceptTrainConfigs {
    RecognizerTrainConfig recognizer;
    EmbedderTrainConfig embedder;
    DetectorTrainConfig detector;
};

struct EditorTrainSection {
    int64_t patch = 2, dim = 256, depth = 8, heads = 4;
    double lambda = 5.0;
    double cond_dropout = 0.1;
    float lr = 1e-4f;
    int steps = 2000;
    int64_t batch = 8;
    bool use_style_reference = true;
};

struct SamplerSection {
    int steps = 50;
    double guidance = 1.0;
    bool composite_background = false;
    int64_t composite_dilation = 2;
};

struct EvalSection {
    bool strip_whitespace = false;
    // what produces the edited images: the trained editor, or the calibration
    // stubs (ground truth ceiling / unedited source floor)
    std::string edit_source = "editor";  // editor | ground_truth | source
    int max_pairs = 0;                   // 0 = all
};

struct AblateSection {
    std::vector<double> lambdas{0.0, 5.0};
    std::vector<uint64_t> seeds{0, 1};
    int eval_pairs = 32;
};

struct RunConfig {
    uint64_t seed = 0;
    bool deterministic = true;
    std::string output_dir = "runs/out";
    DataConfig data;
    CodecTrainConfig codec;
    PerceptTrainConfigs percept;
    EditorTrainSection editor;
    SamplerSection sampler;
    EvalSection eval;
    AblateSection ablate;
};

// Parses and validates a config file; unknown keys are rejected with the
// offending key's full path in the message.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

// Artifact locations inside a config's output directory.
std::string dataset_dir(const RunConfig& cfg);
std::string codec_path(const RunConfig& cfg);
std::string recognizer_path(const RunConfig& cfg);
std::string embedder_path(const RunConfig& cfg);
std::string detector_path(const RunConfig& cfg);
std::string editor_path(const RunConfig& cfg);

// Subcommand bodies. Each writes its outputs plus a run manifest under the
// output directory and throws on failure; nothing previously written is
// mutated (existing target artifacts are an error).
void cmd_gen_data(const RunConfig& cfg);
void cmd_train_codec(const RunConfig& cfg);
void cmd_train_percept(const RunConfig& cfg);
void cmd_train_editor(const RunConfig& cfg);
void cmd_edit(const RunConfig& cfg, const std::string& request_json_path);
void cmd_evaluate(const RunConfig& cfg);
void cmd_ablate(const RunConfig& cfg);

// Maps a thrown exception onto the exit-code families above.
int exit_code_for(const std::exception& e);

}  // namespace gf::cli
