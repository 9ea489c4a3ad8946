#include "gf/pipeline/pipeline.hpp"

#include <string>
#include <utility>

#include <json.hpp>

#include "gf/condassembly/condassembly.hpp"
#include "gf/nn/checkpoint.hpp"
#include "gf/rng.hpp"

using nlohmann::json;

namespace gf::pipeline {

namespace {

// Replace every style exemplar with the glyph map's blank canvas value, which
// removes the style reference while keeping request geometry identical.
condassembly::EditRequest blank_glyphs(condassembly::EditRequest req) {
    for (auto& e : req.edits) e.glyph_patch.fill(condassembly::kBlankValue);
    return req;
}

condassembly::EditRequest pair_request(const scenegen::SamplePair& pair,
                                       bool use_style_reference) {
    condassembly::EditRequest req = condassembly::request_from_pair(pair);
    return use_style_reference ? std::move(req) : blank_glyphs(std::move(req));
}

}  // namespace

LatentSet build_latent_set(const std::vector<scenegen::SamplePair>& pairs,
                           const latentcodec::Codec& codec, bool use_style_reference) {
    if (pairs.empty()) throw PipelineError("build_latent_set: empty dataset");
    LatentSet set;
    set.codec_id = codec.id();
    for (const auto& pair : pairs) {
        condassembly::EditRequest req = pair_request(pair, use_style_reference);
        condassembly::ConditionBundle bundle =
            condassembly::assemble(req, codec.config().f);
        LatentItem item;
        item.z1 = codec.normalize(codec.encode(pair.x_gt));
        item.z_ref = codec.normalize(codec.encode(bundle.x_ref));
        item.z_glyph = codec.normalize(codec.encode(bundle.x_glyph));
        item.m_latent = bundle.mask_latent;
        if (set.items.empty()) {
            set.c = item.z1.dim(0);
            set.h = item.z1.dim(1);
            set.w = item.z1.dim(2);
        } else if (item.z1.dim(0) != set.c || item.z1.dim(1) != set.h ||
                   item.z1.dim(2) != set.w) {
            throw PipelineError("build_latent_set: pairs have mixed geometry");
        }
        set.items.push_back(std::move(item));
    }
    return set;
}

editnet::Editor train_editor(const LatentSet& data, const editnet::EditorConfig& model_cfg,
                             const EditorTrainConfig& train_cfg,
                             std::vector<TrainLogEntry>* log) {
    if (data.items.empty()) throw PipelineError("train_editor: empty latent set");
    if (model_cfg.latent_c != data.c || model_cfg.latent_h != data.h ||
        model_cfg.latent_w != data.w)
        throw PipelineError("train_editor: editor latent geometry does not match the data");
    if (train_cfg.steps <= 0 || train_cfg.batch <= 0)
        throw PipelineError("train_editor: steps and batch must be positive");

    editnet::Editor model(model_cfg);
    nn::AdamWConfig oc;
    oc.lr = static_cast<double>(model_cfg.lr);
    nn::AdamW<float> opt(oc);

    int64_t n = static_cast<int64_t>(data.items.size());
    int64_t B = train_cfg.batch, c = data.c, h = data.h, w = data.w;
    int64_t chw = c * h * w, hw = h * w;
    TensorF z1({B, c, h, w}), z_ref({B, c, h, w}), z_glyph({B, c, h, w});
    TensorF m({B, h, w});
    for (int step = 0; step < train_cfg.steps; ++step) {
        // each step is a pure function of (seed, step): replayable, resumable
        Rng rng(derive_seed(train_cfg.seed, static_cast<uint64_t>(step)));
        for (int64_t b = 0; b < B; ++b) {
            const LatentItem& it = data.items[static_cast<size_t>(rng.uniform_int(0, n - 1))];
            std::copy_n(it.z1.data(), chw, z1.data() + b * chw);
            std::copy_n(it.z_ref.data(), chw, z_ref.data() + b * chw);
            std::copy_n(it.z_glyph.data(), chw, z_glyph.data() + b * chw);
            std::copy_n(it.m_latent.data(), hw, m.data() + b * hw);
        }
        editnet::StepStats st = editnet::train_step(model, opt, z1, z_ref, z_glyph, m, rng);
        if (log && (step % train_cfg.log_every == 0 || step + 1 == train_cfg.steps))
            log->push_back({step, st.loss, st.grad_norm});
    }
    return model;
}

void save_editor(const editnet::Editor& model, uint64_t codec_id, const std::string& path) {
    const editnet::EditorConfig& c = model.config();
    json meta = {
        {"kind", "editor"},
        {"codec_id", std::to_string(codec_id)},
        {"config",
         {{"patch", c.patch},
          {"dim", c.dim},
          {"depth", c.depth},
          {"heads", c.heads},
          {"lambda_weight", c.lambda_weight},
          {"cond_dropout", c.cond_dropout},
          {"seed", std::to_string(c.seed)},
          {"latent_c", c.latent_c},
          {"latent_h", c.latent_h},
          {"latent_w", c.latent_w},
          {"lr", c.lr}}},
    };
    nn::save_checkpoint(model.params(), meta.dump(), path, /*with_opt_state=*/false);
}

editnet::Editor load_editor(const std::string& path, uint64_t* codec_id) {
    json meta = json::parse(nn::peek_checkpoint_metadata(path));
    if (meta.value("kind", "") != "editor")
        throw nn::CheckpointError(path + ": not an editor checkpoint");
    const json& jc = meta.at("config");
    editnet::EditorConfig cfg;
    cfg.patch = jc.at("patch").get<int64_t>();
    cfg.dim = jc.at("dim").get<int64_t>();
    cfg.depth = jc.at("depth").get<int64_t>();
    cfg.heads = jc.at("heads").get<int64_t>();
    cfg.lambda_weight = jc.at("lambda_weight").get<double>();
    cfg.cond_dropout = jc.at("cond_dropout").get<double>();
    cfg.seed = std::stoull(jc.at("seed").get<std::string>());
    cfg.latent_c = jc.at("latent_c").get<int64_t>();
    cfg.latent_h = jc.at("latent_h").get<int64_t>();
    cfg.latent_w = jc.at("latent_w").get<int64_t>();
    cfg.lr = jc.at("lr").get<float>();
    editnet::Editor model(cfg);
    nn::load_checkpoint(model.params(), path);
    if (codec_id) *codec_id = std::stoull(meta.at("codec_id").get<std::string>());
    return model;
}

evalharness::EditImageFn make_edit_fn(const editnet::Editor& model,
                                      const latentcodec::Codec& codec,
                                      const sampler::SampleConfig& cfg,
                                      bool use_style_reference) {
    return [&model, &codec, cfg, use_style_reference](const scenegen::SamplePair& pair,
                                                      size_t index) {
        condassembly::EditRequest req = pair_request(pair, use_style_reference);
        sampler::SampleConfig per_item = cfg;
        per_item.seed = derive_seed(cfg.seed, static_cast<uint64_t>(index));
        return sampler::sample_edit(model, codec, req, per_item).image;
    };
}

double font_match_rate(const std::vector<TensorF>& edited,
                       const std::vector<scenegen::SamplePair>& pairs,
                       const percept::StyleEmbedder& embedder) {
    if (edited.size() != pairs.size())
        throw PipelineError("font_match_rate: image / pair count mismatch");
    int64_t hits = 0, total = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        for (const auto& region : pairs[i].regions_tgt) {
            const auto& r = region.rect;
            TensorF crop = crop_image(edited[i], r.x0, r.y0, r.x1, r.y1);
            hits += embedder.classify(crop) == region.style_id;
            ++total;
        }
    }
    if (total == 0) throw PipelineError("font_match_rate: no regions");
    return static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<AblationResult> ablate(const std::vector<scenegen::SamplePair>& train_pairs,
                                   const std::vector<scenegen::SamplePair>& eval_pairs,
                                   const latentcodec::Codec& codec,
                                   const evalharness::PerceptModels& models,
                                   const AblationConfig& cfg) {
    if (eval_pairs.empty()) throw PipelineError("ablate: empty eval set");
    LatentSet with_ref = build_latent_set(train_pairs, codec, true);
    LatentSet without_ref = build_latent_set(train_pairs, codec, false);

    std::vector<AblationResult> results;
    for (bool fsr : {true, false}) {
        const LatentSet& data = fsr ? with_ref : without_ref;
        for (double lambda : cfg.lambdas) {
            for (uint64_t seed : cfg.seeds) {
                editnet::EditorConfig mc = cfg.editor;
                mc.latent_c = data.c;
                mc.latent_h = data.h;
                mc.latent_w = data.w;
                mc.lambda_weight = lambda;
                mc.seed = derive_seed(seed, fsr ? 0xab1 : 0xab0);
                EditorTrainConfig tc = cfg.train;
                tc.seed = derive_seed(seed, 0x7a41);

                std::vector<TrainLogEntry> log;
                editnet::Editor model = train_editor(data, mc, tc, &log);

                evalharness::EditImageFn edit = make_edit_fn(model, codec, cfg.sample, fsr);
                std::vector<TensorF> edited;
                edited.reserve(eval_pairs.size());
                for (size_t i = 0; i < eval_pairs.size(); ++i)
                    edited.push_back(edit(eval_pairs[i], i));
                evalharness::EditImageFn cached =
                    [&edited](const scenegen::SamplePair&, size_t i) { return edited[i]; };
                evalharness::EvalReport rep =
                    evalharness::evaluate_run(cached, eval_pairs, models);

                AblationResult res;
                res.cell = {fsr, lambda, seed};
                res.sen_acc = rep.mean_sen_acc;
                res.ned = rep.mean_ned;
                res.style_sim = rep.mean_style_sim;
                res.b_psnr = rep.mean_b_psnr;
                res.font_match_rate = font_match_rate(edited, eval_pairs, *models.embedder);
                res.train_loss = log.empty() ? 0.0 : log.back().loss;
                results.push_back(res);
            }
        }
    }
    return results;
}

std::string ablation_to_json(const std::vector<AblationResult>& results) {
    json arr = json::array();
    for (const auto& r : results)
        arr.push_back({{"style_reference", r.cell.style_reference},
                       {"lambda", r.cell.lambda_weight},
                       {"seed", std::to_string(r.cell.seed)},
                       {"sen_acc", r.sen_acc},
                       {"ned", r.ned},
                       {"style_sim", r.style_sim},
                       {"b_psnr", r.b_psnr},
                       {"font_match_rate", r.font_match_rate},
                       {"train_loss", r.train_loss}});
    return json({{"cells", arr}}).dump(2);
}

}  // namespace gf::pipeline
