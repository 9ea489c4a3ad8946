#include "gf/cli/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "gf/condassembly/condassembly.hpp"
#include "gf/evalharness/evalharness.hpp"
#include "gf/fontlab/fontlab.hpp"
#include "gf/image.hpp"
#include "gf/latentcodec/latentcodec.hpp"
#include "gf/nn/checkpoint.hpp"
#include "gf/percept/percept.hpp"
#include "gf/pipeline/pipeline.hpp"
#include "gf/rng.hpp"
#include "gf/sampler/sampler.hpp"
#include "gf/scenegen/scenegen.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace gf::cli {

namespace {

// Per-stage seed streams derived from the global seed.
constexpr uint64_t kSeedData = 0xda7a;
constexpr uint64_t kSeedCodec = 0xc0dec;
constexpr uint64_t kSeedRecognizer = 0x6ec0;
constexpr uint64_t kSeedEmbedder = 0xe3b0;
constexpr uint64_t kSeedDetector = 0xde70;
constexpr uint64_t kSeedEditor = 0xed17;
constexpr uint64_t kSeedSampler = 0x5a37;

// ---------------------------------------------------------------------------
// Config parsing with unknown-key rejection.

void reject_unknown(const json& j, const std::string& section,
                    std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k))
            throw ConfigError("unknown key '" + (section.empty() ? k : section + "." + k) + "'");
}

template <typename T>
void opt(const json& j, const char* key, T& out, const std::string& section) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + section + "." + key + "' has the wrong type");
    }
}

void parse_data(const json& j, DataConfig& c) {
    reject_unknown(j, "data", {"width", "height", "pairs", "regions"});
    opt(j, "width", c.width, "data");
    opt(j, "height", c.height, "data");
    opt(j, "pairs", c.pairs, "data");
    opt(j, "regions", c.regions, "data");
    if (c.width < 16 || c.height < 16) throw ConfigError("data.width/height too small");
    if (c.pairs <= 0) throw ConfigError("data.pairs must be positive");
    if (c.regions <= 0) throw ConfigError("data.regions must be positive");
}

void parse_codec(const json& j, CodecTrainConfig& c) {
    reject_unknown(j, "codec",
                   {"f", "c", "width", "epochs", "batch", "lr", "psnr_threshold",
                    "train_images", "eval_images"});
    opt(j, "f", c.f, "codec");
    opt(j, "c", c.c, "codec");
    opt(j, "width", c.width, "codec");
    opt(j, "epochs", c.epochs, "codec");
    opt(j, "batch", c.batch, "codec");
    opt(j, "lr", c.lr, "codec");
    opt(j, "psnr_threshold", c.psnr_threshold, "codec");
    opt(j, "train_images", c.train_images, "codec");
    opt(j, "eval_images", c.eval_images, "codec");
}

void parse_percept(const json& j, PerceptTrainConfigs& c) {
    reject_unknown(j, "percept", {"recognizer", "embedder", "detector"});
    if (j.contains("recognizer")) {
        const json& r = j.at("recognizer");
        reject_unknown(r, "percept.recognizer",
                       {"width", "epochs", "batch", "lr", "train", "eval", "max_len",
                        "accuracy_threshold"});
        opt(r, "width", c.recognizer.width, "percept.recognizer");
        opt(r, "epochs", c.recognizer.epochs, "percept.recognizer");
        opt(r, "batch", c.recognizer.batch, "percept.recognizer");
        opt(r, "lr", c.recognizer.lr, "percept.recognizer");
        opt(r, "train", c.recognizer.train, "percept.recognizer");
        opt(r, "eval", c.recognizer.eval, "percept.recognizer");
        opt(r, "max_len", c.recognizer.max_len, "percept.recognizer");
        opt(r, "accuracy_threshold", c.recognizer.accuracy_threshold, "percept.recognizer");
    }
    if (j.contains("embedder")) {
        const json& r = j.at("embedder");
        reject_unknown(r, "percept.embedder",
                       {"width", "embed_dim", "epochs", "batch", "lr", "train", "eval",
                        "accuracy_threshold"});
        opt(r, "width", c.embedder.width, "percept.embedder");
        opt(r, "embed_dim", c.embedder.embed_dim, "percept.embedder");
        opt(r, "epochs", c.embedder.epochs, "percept.embedder");
        opt(r, "batch", c.embedder.batch, "percept.embedder");
        opt(r, "lr", c.embedder.lr, "percept.embedder");
        opt(r, "train", c.embedder.train, "percept.embedder");
        opt(r, "eval", c.embedder.eval, "percept.embedder");
        opt(r, "accuracy_threshold", c.embedder.accuracy_threshold, "percept.embedder");
    }
    if (j.contains("detector")) {
        const json& r = j.at("detector");
        reject_unknown(r, "percept.detector",
                       {"width", "epochs", "batch", "lr", "train", "threshold"});
        opt(r, "width", c.detector.width, "percept.detector");
        opt(r, "epochs", c.detector.epochs, "percept.detector");
        opt(r, "batch", c.detector.batch, "percept.detector");
        opt(r, "lr", c.detector.lr, "percept.detector");
        opt(r, "train", c.detector.train, "percept.detector");
        opt(r, "threshold", c.detector.threshold, "percept.detector");
    }
}

void parse_editor(const json& j, EditorTrainSection& c) {
    reject_unknown(j, "editor",
                   {"patch", "dim", "depth", "heads", "lambda", "cond_dropout", "lr", "steps",
                    "batch", "use_style_reference"});
    opt(j, "patch", c.patch, "editor");
    opt(j, "dim", c.dim, "editor");
    opt(j, "depth", c.depth, "editor");
    opt(j, "heads", c.heads, "editor");
    opt(j, "lambda", c.lambda, "editor");
    opt(j, "cond_dropout", c.cond_dropout, "editor");
    opt(j, "lr", c.lr, "editor");
    opt(j, "steps", c.steps, "editor");
    opt(j, "batch", c.batch, "editor");
    opt(j, "use_style_reference", c.use_style_reference, "editor");
}

void parse_sampler(const json& j, SamplerSection& c) {
    reject_unknown(j, "sampler",
                   {"steps", "guidance", "composite_background", "composite_dilation"});
    opt(j, "steps", c.steps, "sampler");
    opt(j, "guidance", c.guidance, "sampler");
    opt(j, "composite_background", c.composite_background, "sampler");
    opt(j, "composite_dilation", c.composite_dilation, "sampler");
}

void parse_eval(const json& j, EvalSection& c) {
    reject_unknown(j, "eval", {"strip_whitespace", "edit_source", "max_pairs"});
    opt(j, "strip_whitespace", c.strip_whitespace, "eval");
    opt(j, "edit_source", c.edit_source, "eval");
    opt(j, "max_pairs", c.max_pairs, "eval");
    if (c.edit_source != "editor" && c.edit_source != "ground_truth" && c.edit_source != "source")
        throw ConfigError("eval.edit_source must be editor | ground_truth | source");
}

void parse_ablate(const json& j, AblateSection& c) {
    reject_unknown(j, "ablate", {"lambdas", "seeds", "eval_pairs"});
    opt(j, "lambdas", c.lambdas, "ablate");
    opt(j, "seeds", c.seeds, "ablate");
    opt(j, "eval_pairs", c.eval_pairs, "ablate");
    if (c.lambdas.empty() || c.seeds.empty())
        throw ConfigError("ablate.lambdas and ablate.seeds must be nonempty");
}

json config_to_json(const RunConfig& c) {
    return {
        {"seed", c.seed},
        {"deterministic", c.deterministic},
        {"output_dir", c.output_dir},
        {"data",
         {{"width", c.data.width},
          {"height", c.data.height},
          {"pairs", c.data.pairs},
          {"regions", c.data.regions}}},
        {"codec",
         {{"f", c.codec.f},
          {"c", c.codec.c},
          {"width", c.codec.width},
          {"epochs", c.codec.epochs},
          {"batch", c.codec.batch},
          {"lr", c.codec.lr},
          {"psnr_threshold", c.codec.psnr_threshold},
          {"train_images", c.codec.train_images},
          {"eval_images", c.codec.eval_images}}},
        {"percept",
         {{"recognizer",
           {{"width", c.percept.recognizer.width},
            {"epochs", c.percept.recognizer.epochs},
            {"batch", c.percept.recognizer.batch},
            {"lr", c.percept.recognizer.lr},
            {"train", c.percept.recognizer.train},
            {"eval", c.percept.recognizer.eval},
            {"max_len", c.percept.recognizer.max_len},
            {"accuracy_threshold", c.percept.recognizer.accuracy_threshold}}},
          {"embedder",
           {{"width", c.percept.embedder.width},
            {"embed_dim", c.percept.embedder.embed_dim},
            {"epochs", c.percept.embedder.epochs},
            {"batch", c.percept.embedder.batch},
            {"lr", c.percept.embedder.lr},
            {"train", c.percept.embedder.train},
            {"eval", c.percept.embedder.eval},
            {"accuracy_threshold", c.percept.embedder.accuracy_threshold}}},
          {"detector",
           {{"width", c.percept.detector.width},
            {"epochs", c.percept.detector.epochs},
            {"batch", c.percept.detector.batch},
            {"lr", c.percept.detector.lr},
            {"train", c.percept.detector.train},
            {"threshold", c.percept.detector.threshold}}}}},
        {"editor",
         {{"patch", c.editor.patch},
          {"dim", c.editor.dim},
          {"depth", c.editor.depth},
          {"heads", c.editor.heads},
          {"lambda", c.editor.lambda},
          {"cond_dropout", c.editor.cond_dropout},
          {"lr", c.editor.lr},
          {"steps", c.editor.steps},
          {"batch", c.editor.batch},
          {"use_style_reference", c.editor.use_style_reference}}},
        {"sampler",
         {{"steps", c.sampler.steps},
          {"guidance", c.sampler.guidance},
          {"composite_background", c.sampler.composite_background},
          {"composite_dilation", c.sampler.composite_dilation}}},
        {"eval",
         {{"strip_whitespace", c.eval.strip_whitespace},
          {"edit_source", c.eval.edit_source},
          {"max_pairs", c.eval.max_pairs}}},
        {"ablate",
         {{"lambdas", c.ablate.lambdas},
          {"seeds", c.ablate.seeds},
          {"eval_pairs", c.ablate.eval_pairs}}},
    };
}

// ---------------------------------------------------------------------------
// Manifests and artifact hygiene.

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void refuse_existing(const fs::path& p) {
    if (fs::exists(p))
        throw std::runtime_error("output already exists (artifacts are never mutated): " +
                                 p.string());
}

void write_manifest(const RunConfig& cfg, const std::string& command, double seconds,
                    json extra, const fs::path& path) {
    json m = {{"command", command},
              {"seed", cfg.seed},
              {"deterministic", cfg.deterministic},
              {"charset_hash", percept::charset_hash()},
              {"style_registry_hash", fontlab::style_registry_hash()},
              {"wall_seconds", seconds},
              {"config", config_to_json(cfg)}};
    m.update(extra);
    fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest " + path.string());
    f << m.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Shared loading with prerequisite / hash diagnostics.

scenegen::Dataset require_dataset(const RunConfig& cfg) {
    const std::string dir = dataset_dir(cfg);
    if (!fs::exists(fs::path(dir) / "manifest.json"))
        throw MissingPrerequisite("dataset not found at " + dir + " (run gen-data first)");
    try {
        return scenegen::read_dataset(dir);
    } catch (const scenegen::DatasetError& e) {
        std::string msg = e.what();
        if (msg.find("does not match") != std::string::npos) throw HashMismatch(msg);
        throw;
    }
}

void require_file(const std::string& path, const std::string& hint) {
    if (!fs::exists(path))
        throw MissingPrerequisite(path + " not found (run " + hint + " first)");
}

latentcodec::Codec require_codec(const RunConfig& cfg) {
    require_file(codec_path(cfg), "train codec");
    return latentcodec::Codec::load(codec_path(cfg));
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    reject_unknown(j, "",
                   {"seed", "deterministic", "output_dir", "data", "codec", "percept", "editor",
                    "sampler", "eval", "ablate"});
    RunConfig c;
    opt(j, "seed", c.seed, "");
    opt(j, "deterministic", c.deterministic, "");
    opt(j, "output_dir", c.output_dir, "");
    if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
    if (j.contains("data")) parse_data(j.at("data"), c.data);
    if (j.contains("codec")) parse_codec(j.at("codec"), c.codec);
    if (j.contains("percept")) parse_percept(j.at("percept"), c.percept);
    if (j.contains("editor")) parse_editor(j.at("editor"), c.editor);
    if (j.contains("sampler")) parse_sampler(j.at("sampler"), c.sampler);
    if (j.contains("eval")) parse_eval(j.at("eval"), c.eval);
    if (j.contains("ablate")) parse_ablate(j.at("ablate"), c.ablate);
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string dataset_dir(const RunConfig& c) { return c.output_dir + "/dataset"; }
std::string codec_path(const RunConfig& c) { return c.output_dir + "/codec.ckpt"; }
std::string recognizer_path(const RunConfig& c) { return c.output_dir + "/recognizer.ckpt"; }
std::string embedder_path(const RunConfig& c) { return c.output_dir + "/embedder.ckpt"; }
std::string detector_path(const RunConfig& c) { return c.output_dir + "/detector.ckpt"; }
std::string editor_path(const RunConfig& c) { return c.output_dir + "/editor.ckpt"; }

// ---------------------------------------------------------------------------

void cmd_gen_data(const RunConfig& cfg) {
    double t0 = now_seconds();
    const std::string dir = dataset_dir(cfg);
    refuse_existing(dir);
    uint64_t base = derive_seed(cfg.seed, kSeedData);
    std::vector<scenegen::SamplePair> pairs;
    pairs.reserve(static_cast<size_t>(cfg.data.pairs));
    for (int i = 0; i < cfg.data.pairs; ++i) {
        // bounded deterministic retry: placement can fail for unlucky seeds
        bool done = false;
        for (uint64_t attempt = 0; attempt < 64 && !done; ++attempt) {
            try {
                pairs.push_back(scenegen::build_pair(
                    derive_seed(base, (static_cast<uint64_t>(i) << 8) | attempt),
                    cfg.data.width, cfg.data.height, cfg.data.regions));
                done = true;
            } catch (const scenegen::PlacementFailure&) {
            } catch (const scenegen::CharsetExhausted&) {
            }
        }
        if (!done)
            throw std::runtime_error("gen-data: no valid scene found for pair " +
                                     std::to_string(i));
    }
    scenegen::write_dataset(pairs, dir);
    write_manifest(cfg, "gen-data", now_seconds() - t0,
                   {{"pairs", pairs.size()}, {"dataset_dir", dir}},
                   fs::path(dir) / "run_manifest.json");
}

void cmd_train_codec(const RunConfig& cfg) {
    double t0 = now_seconds();
    refuse_existing(codec_path(cfg));
    scenegen::Dataset ds = require_dataset(cfg);

    std::vector<TensorF> train, eval;
    int want_train = cfg.codec.train_images, want_eval = cfg.codec.eval_images;
    for (const auto& p : ds.pairs) {
        if (static_cast<int>(train.size()) < want_train) train.push_back(p.x_gt);
        if (static_cast<int>(train.size()) < want_train) train.push_back(p.x_src);
    }
    for (auto it = ds.pairs.rbegin(); it != ds.pairs.rend(); ++it)
        if (static_cast<int>(eval.size()) < want_eval) eval.push_back(it->x_gt);
    if (train.empty() || eval.empty())
        throw MissingPrerequisite("dataset too small for codec training");

    latentcodec::CodecConfig cc;
    cc.f = cfg.codec.f;
    cc.c = cfg.codec.c;
    cc.width = cfg.codec.width;
    cc.epochs = cfg.codec.epochs;
    cc.batch = cfg.codec.batch;
    cc.lr = cfg.codec.lr;
    cc.psnr_threshold = cfg.codec.psnr_threshold;
    cc.seed = derive_seed(cfg.seed, kSeedCodec);
    double psnr = 0;
    latentcodec::Codec codec = latentcodec::train_codec(train, eval, cc, &psnr);
    codec.save(codec_path(cfg));
    write_manifest(cfg, "train codec", now_seconds() - t0,
                   {{"held_out_psnr", psnr}, {"codec_id", std::to_string(codec.id())}},
                   codec_path(cfg) + ".manifest.json");
}

void cmd_train_percept(const RunConfig& cfg) {
    double t0 = now_seconds();
    refuse_existing(recognizer_path(cfg));
    refuse_existing(embedder_path(cfg));
    refuse_existing(detector_path(cfg));

    const auto& pc = cfg.percept;
    percept::RecognizerConfig rc;
    rc.width = pc.recognizer.width;
    rc.epochs = pc.recognizer.epochs;
    rc.batch = pc.recognizer.batch;
    rc.lr = pc.recognizer.lr;
    rc.accuracy_threshold = pc.recognizer.accuracy_threshold;
    rc.seed = derive_seed(cfg.seed, kSeedRecognizer);
    auto rec_eval = percept::make_crop_dataset(derive_seed(rc.seed, 2), pc.recognizer.eval,
                                               pc.recognizer.max_len);
    // `train` is the per-epoch crop count; every epoch draws fresh data
    auto rec_src = [&](int epoch) {
        return percept::make_crop_dataset(derive_seed(rc.seed, 0x100 + (uint64_t)epoch),
                                          pc.recognizer.train, pc.recognizer.max_len);
    };
    double rec_acc = 0;
    percept::Recognizer rec = percept::train_recognizer_stream(rec_src, rec_eval, rc, &rec_acc);
    rec.save(recognizer_path(cfg));

    percept::EmbedderConfig ec;
    ec.width = pc.embedder.width;
    ec.embed_dim = pc.embedder.embed_dim;
    ec.epochs = pc.embedder.epochs;
    ec.batch = pc.embedder.batch;
    ec.lr = pc.embedder.lr;
    ec.accuracy_threshold = pc.embedder.accuracy_threshold;
    ec.seed = derive_seed(cfg.seed, kSeedEmbedder);
    auto emb_eval = percept::make_crop_dataset(derive_seed(ec.seed, 2), pc.embedder.eval, 4);
    auto emb_src = [&](int epoch) {
        return percept::make_crop_dataset(derive_seed(ec.seed, 0x100 + (uint64_t)epoch),
                                          pc.embedder.train, 4);
    };
    double emb_acc = 0;
    percept::StyleEmbedder emb =
        percept::train_style_embedder_stream(emb_src, emb_eval, ec, &emb_acc);
    emb.save(embedder_path(cfg));

    percept::DetectorConfig dc;
    dc.width = pc.detector.width;
    dc.epochs = pc.detector.epochs;
    dc.batch = pc.detector.batch;
    dc.lr = pc.detector.lr;
    dc.threshold = pc.detector.threshold;
    dc.seed = derive_seed(cfg.seed, kSeedDetector);
    auto det_train = percept::make_ink_dataset(derive_seed(dc.seed, 1), pc.detector.train,
                                               cfg.data.width, cfg.data.height);
    percept::InkDetector det = percept::train_ink_detector(det_train, dc);
    det.save(detector_path(cfg));

    write_manifest(cfg, "train percept", now_seconds() - t0,
                   {{"recognizer_accuracy", rec_acc}, {"embedder_accuracy", emb_acc}},
                   cfg.output_dir + "/percept.manifest.json");
}

void cmd_train_editor(const RunConfig& cfg) {
    double t0 = now_seconds();
    refuse_existing(editor_path(cfg));
    scenegen::Dataset ds = require_dataset(cfg);
    latentcodec::Codec codec = require_codec(cfg);

    pipeline::LatentSet latents =
        pipeline::build_latent_set(ds.pairs, codec, cfg.editor.use_style_reference);

    editnet::EditorConfig mc;
    mc.patch = cfg.editor.patch;
    mc.dim = cfg.editor.dim;
    mc.depth = cfg.editor.depth;
    mc.heads = cfg.editor.heads;
    mc.lambda_weight = cfg.editor.lambda;
    mc.cond_dropout = cfg.editor.cond_dropout;
    mc.lr = cfg.editor.lr;
    mc.latent_c = latents.c;
    mc.latent_h = latents.h;
    mc.latent_w = latents.w;
    mc.seed = derive_seed(cfg.seed, kSeedEditor);

    pipeline::EditorTrainConfig tc;
    tc.steps = cfg.editor.steps;
    tc.batch = cfg.editor.batch;
    tc.seed = derive_seed(cfg.seed, derive_seed(kSeedEditor, 1));

    std::vector<pipeline::TrainLogEntry> log;
    editnet::Editor model = pipeline::train_editor(latents, mc, tc, &log);
    pipeline::save_editor(model, codec.id(), editor_path(cfg));

    json jlog = json::array();
    for (const auto& e : log) jlog.push_back({{"step", e.step}, {"loss", e.loss}});
    write_manifest(cfg, "train editor", now_seconds() - t0,
                   {{"codec_id", std::to_string(codec.id())},
                    {"editor_params_hash", std::to_string(nn::params_hash(model.params()))},
                    {"final_loss", log.empty() ? 0.0 : log.back().loss},
                    {"training_log", jlog}},
                   editor_path(cfg) + ".manifest.json");
}

void cmd_edit(const RunConfig& cfg, const std::string& request_json_path) {
    double t0 = now_seconds();
    require_file(request_json_path, "nothing; the request file is an input");
    latentcodec::Codec codec = require_codec(cfg);
    require_file(editor_path(cfg), "train editor");
    uint64_t want_codec = 0;
    editnet::Editor model = pipeline::load_editor(editor_path(cfg), &want_codec);
    if (want_codec != codec.id())
        throw HashMismatch("editor was trained against codec_id " + std::to_string(want_codec) +
                           " but " + codec_path(cfg) + " has id " + std::to_string(codec.id()));

    condassembly::EditRequest req = condassembly::load_request(request_json_path);
    sampler::SampleConfig sc;
    sc.steps = cfg.sampler.steps;
    sc.guidance_scale = cfg.sampler.guidance;
    sc.composite_background = cfg.sampler.composite_background;
    sc.composite_dilation = cfg.sampler.composite_dilation;
    sc.seed = derive_seed(cfg.seed, kSeedSampler);

    fs::path out_dir = fs::path(cfg.output_dir) / "edits" /
                       (fs::path(request_json_path).stem().string() + "-seed" +
                        std::to_string(cfg.seed));
    refuse_existing(out_dir);
    fs::create_directories(out_dir);

    sampler::EditResult res = sampler::sample_edit(model, codec, req, sc);
    condassembly::save_image_u8(res.image, (out_dir / "edited.img").string());
    write_ppm((out_dir / "edited.ppm").string(), res.image);
    write_manifest(cfg, "edit", now_seconds() - t0,
                   {{"request", request_json_path},
                    {"sample_seed", res.seed},
                    {"sample_seconds", res.seconds},
                    {"codec_id", std::to_string(codec.id())},
                    {"outputs", {(out_dir / "edited.img").string(),
                                 (out_dir / "edited.ppm").string()}}},
                   out_dir / "metadata.json");
}

void cmd_evaluate(const RunConfig& cfg) {
    double t0 = now_seconds();
    scenegen::Dataset ds = require_dataset(cfg);
    require_file(recognizer_path(cfg), "train percept");
    require_file(embedder_path(cfg), "train percept");
    require_file(detector_path(cfg), "train percept");
    percept::Recognizer rec = percept::Recognizer::load(recognizer_path(cfg));
    percept::StyleEmbedder emb = percept::StyleEmbedder::load(embedder_path(cfg));
    percept::InkDetector det = percept::InkDetector::load(detector_path(cfg));
    evalharness::PerceptModels models{&rec, &emb, &det};

    std::vector<scenegen::SamplePair> pairs = ds.pairs;
    if (cfg.eval.max_pairs > 0 && static_cast<int>(pairs.size()) > cfg.eval.max_pairs)
        pairs.resize(static_cast<size_t>(cfg.eval.max_pairs));

    evalharness::EvalConfig ec;
    ec.strip_whitespace = cfg.eval.strip_whitespace;
    json meta = {{"edit_source", cfg.eval.edit_source},
                 {"seed", cfg.seed},
                 {"charset_hash", percept::charset_hash()},
                 {"style_registry_hash", fontlab::style_registry_hash()}};

    evalharness::EvalReport report;
    if (cfg.eval.edit_source == "ground_truth") {
        ec.metadata_json = meta.dump();
        report = evalharness::evaluate_run(evalharness::ground_truth_stub(), pairs, models, ec);
    } else if (cfg.eval.edit_source == "source") {
        ec.metadata_json = meta.dump();
        report = evalharness::evaluate_run(evalharness::unedited_source_stub(), pairs, models, ec);
    } else {
        latentcodec::Codec codec = require_codec(cfg);
        require_file(editor_path(cfg), "train editor");
        uint64_t want_codec = 0;
        editnet::Editor model = pipeline::load_editor(editor_path(cfg), &want_codec);
        if (want_codec != codec.id())
            throw HashMismatch("editor/codec id mismatch: " + std::to_string(want_codec) +
                               " vs " + std::to_string(codec.id()));
        sampler::SampleConfig sc;
        sc.steps = cfg.sampler.steps;
        sc.guidance_scale = cfg.sampler.guidance;
        sc.composite_background = cfg.sampler.composite_background;
        sc.composite_dilation = cfg.sampler.composite_dilation;
        sc.seed = derive_seed(cfg.seed, kSeedSampler);
        meta["codec_id"] = std::to_string(codec.id());
        ec.metadata_json = meta.dump();
        report = evalharness::evaluate_run(pipeline::make_edit_fn(model, codec, sc), pairs,
                                           models, ec);
    }

    fs::path out = fs::path(cfg.output_dir) / ("eval-" + cfg.eval.edit_source);
    refuse_existing(out);
    fs::create_directories(out);
    evalharness::write_report(report, (out / "report.json").string());
    write_manifest(cfg, "evaluate", now_seconds() - t0,
                   {{"pairs", pairs.size()},
                    {"edit_source", cfg.eval.edit_source},
                    {"mean_sen_acc", report.mean_sen_acc},
                    {"mean_b_psnr", report.mean_b_psnr},
                    {"mean_style_sim", report.mean_style_sim}},
                   out / "run_manifest.json");
}

void cmd_ablate(const RunConfig& cfg) {
    double t0 = now_seconds();
    fs::path out = fs::path(cfg.output_dir) / "ablation";
    refuse_existing(out);
    scenegen::Dataset ds = require_dataset(cfg);
    latentcodec::Codec codec = require_codec(cfg);
    require_file(recognizer_path(cfg), "train percept");
    require_file(embedder_path(cfg), "train percept");
    require_file(detector_path(cfg), "train percept");
    percept::Recognizer rec = percept::Recognizer::load(recognizer_path(cfg));
    percept::StyleEmbedder emb = percept::StyleEmbedder::load(embedder_path(cfg));
    percept::InkDetector det = percept::InkDetector::load(detector_path(cfg));
    evalharness::PerceptModels models{&rec, &emb, &det};

    int eval_n = std::min<int>(cfg.ablate.eval_pairs, static_cast<int>(ds.pairs.size()) / 2);
    if (eval_n < 1) throw MissingPrerequisite("dataset too small for an ablation split");
    std::vector<scenegen::SamplePair> eval_pairs(ds.pairs.end() - eval_n, ds.pairs.end());
    std::vector<scenegen::SamplePair> train_pairs(ds.pairs.begin(), ds.pairs.end() - eval_n);

    pipeline::AblationConfig ac;
    ac.editor.patch = cfg.editor.patch;
    ac.editor.dim = cfg.editor.dim;
    ac.editor.depth = cfg.editor.depth;
    ac.editor.heads = cfg.editor.heads;
    ac.editor.cond_dropout = cfg.editor.cond_dropout;
    ac.editor.lr = cfg.editor.lr;
    ac.train.steps = cfg.editor.steps;
    ac.train.batch = cfg.editor.batch;
    ac.sample.steps = cfg.sampler.steps;
    ac.sample.guidance_scale = cfg.sampler.guidance;
    ac.sample.seed = derive_seed(cfg.seed, kSeedSampler);
    ac.lambdas = cfg.ablate.lambdas;
    ac.seeds.clear();
    for (uint64_t s : cfg.ablate.seeds) ac.seeds.push_back(derive_seed(cfg.seed, s));

    auto results = pipeline::ablate(train_pairs, eval_pairs, codec, models, ac);
    fs::create_directories(out);
    std::ofstream f(out / "table.json");
    f << pipeline::ablation_to_json(results) << "\n";
    write_manifest(cfg, "ablate", now_seconds() - t0,
                   {{"cells", results.size()},
                    {"train_pairs", train_pairs.size()},
                    {"eval_pairs", eval_pairs.size()}},
                   out / "run_manifest.json");
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const MissingPrerequisite*>(&e)) return kExitPrerequisite;
    if (dynamic_cast<const HashMismatch*>(&e)) return kExitHashMismatch;
    std::string msg = e.what();
    if (msg.find("hash mismatch") != std::string::npos ||
        msg.find("does not match") != std::string::npos)
        return kExitHashMismatch;
    if (msg.find("cannot read") != std::string::npos) return kExitPrerequisite;
    return kExitRuntime;
}

}  // namespace gf::cli
