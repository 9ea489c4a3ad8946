#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "gf/nn/checkpoint.hpp"
#include "gf/pipeline/pipeline.hpp"

using namespace gf;
using namespace gf::pipeline;

namespace {

scenegen::SamplePair usable_pair(uint64_t seed) {
    for (uint64_t s = seed; s < seed + 16; ++s) {
        try {
            return scenegen::build_pair(s, 64, 64, 1);
        } catch (const scenegen::PlacementFailure&) {
        } catch (const scenegen::CharsetExhausted&) {
        }
    }
    throw std::runtime_error("no usable pair near seed " + std::to_string(seed));
}

std::vector<scenegen::SamplePair> some_pairs(uint64_t seed, int n) {
    std::vector<scenegen::SamplePair> out;
    for (int i = 0; i < n; ++i) out.push_back(usable_pair(seed + 100 * (uint64_t)i));
    return out;
}

const latentcodec::Codec& tiny_codec() {
    // untrained: identity statistics, random weights; enough for plumbing
    static latentcodec::Codec codec = [] {
        latentcodec::CodecConfig cfg;
        cfg.width = 8;
        return latentcodec::Codec(cfg);
    }();
    return codec;
}

editnet::EditorConfig tiny_editor_cfg() {
    editnet::EditorConfig cfg;
    cfg.dim = 32;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("latent sets encode all streams and react to the style-reference switch") {
    auto pairs = some_pairs(500, 2);
    LatentSet on = build_latent_set(pairs, tiny_codec(), true);
    REQUIRE(on.items.size() == 2);
    CHECK(on.codec_id == tiny_codec().id());
    CHECK(on.c == 4);
    CHECK(on.h == 16);
    CHECK(on.w == 16);
    for (const auto& it : on.items) {
        CHECK(it.z1.shape() == std::vector<int64_t>{4, 16, 16});
        CHECK(it.z_ref.shape() == it.z1.shape());
        CHECK(it.z_glyph.shape() == it.z1.shape());
        CHECK(it.m_latent.shape() == std::vector<int64_t>{16, 16});
        float msum = 0;
        for (int64_t i = 0; i < it.m_latent.numel(); ++i) msum += it.m_latent[i];
        CHECK(msum > 0.0f);  // every pair has at least one edit region
    }

    // removing the style reference changes only the glyph stream
    LatentSet off = build_latent_set(pairs, tiny_codec(), false);
    CHECK(off.items[0].z1 == on.items[0].z1);
    CHECK(off.items[0].z_ref == on.items[0].z_ref);
    CHECK(off.items[0].m_latent == on.items[0].m_latent);
    CHECK(off.items[0].z_glyph != on.items[0].z_glyph);
    // the blank canvas is edit-independent, so both items agree on it
    CHECK(off.items[0].z_glyph == off.items[1].z_glyph);

    LatentSet again = build_latent_set(pairs, tiny_codec(), true);
    CHECK(again.items[1].z1 == on.items[1].z1);
    CHECK(again.items[1].z_glyph == on.items[1].z_glyph);

    CHECK_THROWS_AS(build_latent_set({}, tiny_codec()), PipelineError);
}

TEST_CASE("editor training is deterministic and reduces the loss") {
    auto pairs = some_pairs(700, 3);
    LatentSet data = build_latent_set(pairs, tiny_codec());

    EditorTrainConfig tc;
    tc.steps = 30;
    tc.batch = 3;
    tc.seed = 9;
    tc.log_every = 1;

    std::vector<TrainLogEntry> log_a, log_b;
    editnet::Editor a = train_editor(data, tiny_editor_cfg(), tc, &log_a);
    editnet::Editor b = train_editor(data, tiny_editor_cfg(), tc, &log_b);
    CHECK(nn::params_hash(a.params()) == nn::params_hash(b.params()));
    REQUIRE(log_a.size() == log_b.size());
    for (size_t i = 0; i < log_a.size(); ++i) CHECK(log_a[i].loss == log_b[i].loss);

    // averaged over the run, later steps beat the zero-init start
    double head = (log_a[0].loss + log_a[1].loss + log_a[2].loss) / 3.0;
    size_t n = log_a.size();
    double tail = (log_a[n - 1].loss + log_a[n - 2].loss + log_a[n - 3].loss) / 3.0;
    CHECK(tail < head);

    // a different seed trains different weights
    EditorTrainConfig tc2 = tc;
    tc2.seed = 10;
    editnet::Editor c = train_editor(data, tiny_editor_cfg(), tc2);
    CHECK(nn::params_hash(c.params()) != nn::params_hash(a.params()));

    editnet::EditorConfig wrong = tiny_editor_cfg();
    wrong.latent_h = 8;
    CHECK_THROWS_AS(train_editor(data, wrong, tc), PipelineError);
    EditorTrainConfig bad = tc;
    bad.steps = 0;
    CHECK_THROWS_AS(train_editor(data, tiny_editor_cfg(), bad), PipelineError);
}

TEST_CASE("editor checkpoints rebuild the exact model and carry the codec id") {
    auto pairs = some_pairs(900, 2);
    LatentSet data = build_latent_set(pairs, tiny_codec());
    EditorTrainConfig tc;
    tc.steps = 5;
    tc.batch = 2;
    editnet::Editor model = train_editor(data, tiny_editor_cfg(), tc);

    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "gf_editor_test.ckpt";
    save_editor(model, tiny_codec().id(), path.string());

    uint64_t codec_id = 0;
    editnet::Editor loaded = load_editor(path.string(), &codec_id);
    CHECK(codec_id == tiny_codec().id());
    CHECK(nn::params_hash(loaded.params()) == nn::params_hash(model.params()));
    CHECK(loaded.config().dim == 32);
    CHECK(loaded.config().depth == 1);
    fs::remove(path);

    // a non-editor checkpoint is refused by kind
    fs::path other = fs::temp_directory_path() / "gf_not_editor.ckpt";
    nn::save_checkpoint(model.params(), R"({"kind":"something_else"})", other.string());
    CHECK_THROWS_AS(load_editor(other.string()), nn::CheckpointError);
    fs::remove(other);
}

TEST_CASE("the sampler adapter is deterministic per index and shape-correct") {
    auto pairs = some_pairs(1100, 2);
    LatentSet data = build_latent_set(pairs, tiny_codec());
    EditorTrainConfig tc;
    tc.steps = 5;
    tc.batch = 2;
    editnet::Editor model = train_editor(data, tiny_editor_cfg(), tc);

    sampler::SampleConfig sc;
    sc.steps = 4;
    sc.seed = 77;
    evalharness::EditImageFn edit = make_edit_fn(model, tiny_codec(), sc);

    TensorF img = edit(pairs[0], 0);
    CHECK(img.shape() == pairs[0].x_gt.shape());
    CHECK(edit(pairs[0], 0) == img);   // same index: bit-identical
    CHECK(edit(pairs[0], 1) != img);   // per-index seeds differ

    // blanked style reference changes the sampled output
    evalharness::EditImageFn no_ref = make_edit_fn(model, tiny_codec(), sc, false);
    CHECK(no_ref(pairs[0], 0) != img);
}

TEST_CASE("font match rate counts per-region classifications") {
    auto pairs = some_pairs(1300, 2);
    percept::StyleEmbedder emb{percept::EmbedderConfig{}};
    std::vector<TensorF> edited{pairs[0].x_gt, pairs[1].x_gt};
    double rate = font_match_rate(edited, pairs, emb);
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
    CHECK(font_match_rate(edited, pairs, emb) == rate);
    CHECK_THROWS_AS(font_match_rate({pairs[0].x_gt}, pairs, emb), PipelineError);
}

TEST_CASE("a micro ablation grid runs end to end and serializes") {
    auto train = some_pairs(1500, 2);
    auto eval = some_pairs(1700, 2);

    percept::Recognizer rec{percept::RecognizerConfig{}};
    percept::StyleEmbedder emb{percept::EmbedderConfig{}};
    percept::InkDetector det{percept::DetectorConfig{}};
    evalharness::PerceptModels models{&rec, &emb, &det};

    AblationConfig cfg;
    cfg.editor = tiny_editor_cfg();
    cfg.train.steps = 4;
    cfg.train.batch = 2;
    cfg.sample.steps = 3;
    cfg.lambdas = {0.0};
    cfg.seeds = {3};

    auto results = ablate(train, eval, tiny_codec(), models, cfg);
    REQUIRE(results.size() == 2);  // style reference on and off
    CHECK(results[0].cell.style_reference);
    CHECK(!results[1].cell.style_reference);
    for (const auto& r : results) {
        CHECK(r.cell.lambda_weight == 0.0);
        CHECK(r.sen_acc >= 0.0);
        CHECK(r.sen_acc <= 1.0);
        CHECK(r.font_match_rate >= 0.0);
        CHECK(r.font_match_rate <= 1.0);
        CHECK(r.train_loss > 0.0);
        CHECK(std::isfinite(r.b_psnr));
    }

    auto j = nlohmann::json::parse(ablation_to_json(results));
    REQUIRE(j["cells"].size() == 2);
    CHECK(j["cells"][0]["style_reference"] == true);
    CHECK(j["cells"][1]["lambda"] == 0.0);
}
