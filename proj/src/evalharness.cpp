#include "gf/evalharness/evalharness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "gf/image.hpp"

using nlohmann::json;

namespace gf::evalharness {

double ned(const std::string& a, const std::string& b) {
    if (a.empty() && b.empty()) return 1.0;
    size_t n = a.size(), m = b.size();
    std::vector<size_t> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = j;
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= m; ++j) {
            size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    double dist = static_cast<double>(prev[m]);
    return 1.0 - dist / static_cast<double>(std::max(n, m));
}

namespace {

std::string strip_ws(const std::string& s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

}  // namespace

double sen_acc(const std::vector<std::string>& pred, const std::vector<std::string>& gt,
               bool strip_whitespace) {
    if (pred.size() != gt.size())
        throw LengthMismatch("sen_acc: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(gt.size()) + " references");
    if (pred.empty()) return 1.0;
    size_t hit = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (strip_whitespace)
            hit += strip_ws(pred[i]) == strip_ws(gt[i]);
        else
            hit += pred[i] == gt[i];
    }
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double spatial_iou(const std::optional<scenegen::Rect>& detected, const scenegen::Rect& gt) {
    if (gt.w() <= 0 || gt.h() <= 0)
        throw std::invalid_argument("spatial_iou: degenerate ground-truth box");
    if (!detected) return 0.0;
    return scenegen::dilated_iou(*detected, gt, 0);
}

double style_sim(const TensorF& gen_crop, const TensorF& ref_crop,
                 const percept::StyleEmbedder& embedder) {
    return percept::cosine(embedder.embed(gen_crop), embedder.embed(ref_crop));
}

double b_psnr(const TensorF& gen, const TensorF& gt, const TensorU8& mask) {
    if (gen.shape() != gt.shape()) throw nn::ShapeMismatch("b_psnr: image shapes differ");
    if (gen.shape().size() != 3 || gen.dim(1) != mask.dim(0) || gen.dim(2) != mask.dim(1))
        throw nn::ShapeMismatch("b_psnr: mask does not match images");
    int64_t hw = mask.numel(), c = gen.dim(0);
    double mse = 0;
    int64_t count = 0;
    for (int64_t i = 0; i < hw; ++i) {
        if (mask[i]) continue;
        for (int64_t ch = 0; ch < c; ++ch) {
            double d = static_cast<double>(gen[ch * hw + i]) - gt[ch * hw + i];
            mse += d * d;
        }
        count += c;
    }
    if (count == 0) throw EmptyBackground("b_psnr: mask covers the whole image");
    mse /= static_cast<double>(count);
    if (mse <= 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

SFidResult s_fid(const std::vector<std::vector<float>>& gen_features,
                 const std::vector<std::vector<float>>& real_features) {
    if (gen_features.size() < 2 || real_features.size() < 2)
        throw std::invalid_argument("s_fid: each set needs at least 2 samples");
    size_t e = gen_features[0].size();
    for (const auto& set : {&gen_features, &real_features})
        for (const auto& f : *set)
            if (f.size() != e) throw nn::ShapeMismatch("s_fid: ragged feature rows");

    auto stats = [&](const std::vector<std::vector<float>>& set, Eigen::VectorXd& mu,
                     Eigen::MatrixXd& cov) {
        int64_t n = static_cast<int64_t>(set.size()), d = static_cast<int64_t>(e);
        Eigen::MatrixXd x(n, d);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j) x(i, j) = set[static_cast<size_t>(i)][(size_t)j];
        mu = x.colwise().mean();
        Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
        cov = centered.transpose() * centered / static_cast<double>(n - 1);
    };
    Eigen::VectorXd mu1, mu2;
    Eigen::MatrixXd s1, s2;
    stats(gen_features, mu1, s1);
    stats(real_features, mu2, s2);

    SFidResult res;
    const double eps = 1e-6;
    auto min_eig = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        return es.eigenvalues().minCoeff();
    };
    if (min_eig(s1) < 1e-10 || min_eig(s2) < 1e-10 ||
        gen_features.size() < 2 * e || real_features.size() < 2 * e) {
        res.regularized = true;
        s1 += eps * Eigen::MatrixXd::Identity((int64_t)e, (int64_t)e);
        s2 += eps * Eigen::MatrixXd::Identity((int64_t)e, (int64_t)e);
    }

    // tr((S1 S2)^{1/2}) = tr((S1^{1/2} S2 S1^{1/2})^{1/2}), symmetric PSD
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(s1);
    Eigen::VectorXd ev = es1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd s1h = es1.eigenvectors() * ev.asDiagonal() * es1.eigenvectors().transpose();
    Eigen::MatrixXd inner = s1h * s2 * s1h;
    inner = 0.5 * (inner + inner.transpose());  // clean numerical asymmetry
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esi(inner);
    double tr_sqrt = esi.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    res.value = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    if (res.value < 0 && res.value > -1e-9) res.value = 0;  // numerical floor
    return res;
}

// ---------------------------------------------------------------------------

TensorF glyph_ref_image(const fontlab::RenderedText& glyph_ref) {
    int64_t h = glyph_ref.coverage.dim(0), w = glyph_ref.coverage.dim(1);
    TensorF img = make_image(h, w, {0.5f, 0.5f, 0.5f});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < h * w; ++i) {
            float a = glyph_ref.coverage[i];
            if (a > 0) img[c * h * w + i] = img[c * h * w + i] * (1 - a) + glyph_ref.pixels[c * h * w + i];
        }
    return img;
}

scenegen::Rect region_tight_bbox(const scenegen::TextRegion& region, int64_t w, int64_t h) {
    // geometry depends only on text/style/rect, so a scratch re-render gives
    // the same ink placement the dataset image has
    TensorF scratch = make_image(h, w);
    const auto& style = fontlab::list_styles().at(static_cast<size_t>(region.style_id));
    auto rt = scenegen::render_into_rect(scratch, region.text, style, region.color, region.rect);
    return {rt.x0, rt.y0, rt.x1, rt.y1};
}

EditImageFn ground_truth_stub() {
    return [](const scenegen::SamplePair& pair, size_t) { return pair.x_gt; };
}

EditImageFn unedited_source_stub() {
    return [](const scenegen::SamplePair& pair, size_t) { return pair.x_src; };
}

EvalReport evaluate_run(const EditImageFn& edit, const std::vector<scenegen::SamplePair>& pairs,
                        const PerceptModels& models, const EvalConfig& cfg) {
    if (!models.recognizer || !models.embedder || !models.detector)
        throw std::invalid_argument("evaluate_run: all three perception models are required");
    if (pairs.empty()) throw std::invalid_argument("evaluate_run: empty dataset");

    EvalReport report;
    report.metadata_json = cfg.metadata_json;
    std::vector<std::vector<float>> gen_feats, real_feats;

    for (size_t i = 0; i < pairs.size(); ++i) {
        const auto& pair = pairs[i];
        TensorF gen = edit(pair, i);
        if (gen.shape() != pair.x_gt.shape())
            throw nn::ShapeMismatch("evaluate_run: edited image shape " + gen.shape_str());
        int64_t W = gen.dim(2), H = gen.dim(1);

        SampleRecord rec;
        int exact = 0;
        double nedsum = 0, iousum = 0, stylesum = 0;
        for (const auto& region : pair.regions_tgt) {
            const auto& r = region.rect;
            TensorF crop = crop_image(gen, r.x0, r.y0, r.x1, r.y1);
            std::string read = models.recognizer->recognize(crop).text;
            std::string want = region.text;
            if (cfg.strip_whitespace) {
                read = strip_ws(read);
                want = strip_ws(want);
            }
            exact += read == want;
            nedsum += ned(read, want);
            iousum += spatial_iou(percept::detect_bbox(*models.detector, gen, r),
                                  region_tight_bbox(region, W, H));
            TensorF ref = glyph_ref_image(region.glyph_ref);
            stylesum += style_sim(crop, ref, *models.embedder);

            gen_feats.push_back(models.embedder->features(percept::to_crop(crop)));
            TensorF gt_crop = crop_image(pair.x_gt, r.x0, r.y0, r.x1, r.y1);
            real_feats.push_back(models.embedder->features(percept::to_crop(gt_crop)));
        }
        double nreg = static_cast<double>(pair.regions_tgt.size());
        rec.sen_acc = exact == static_cast<int>(pair.regions_tgt.size());
        rec.ned = nedsum / nreg;
        rec.spatial_iou = iousum / nreg;
        rec.style_sim = stylesum / nreg;
        rec.b_psnr = b_psnr(gen, pair.x_gt, pair.region_mask);
        report.records.push_back(rec);
    }

    double n = static_cast<double>(report.records.size());
    for (const auto& r : report.records) {
        report.mean_sen_acc += r.sen_acc / n;
        report.mean_ned += r.ned / n;
        report.mean_spatial_iou += r.spatial_iou / n;
        report.mean_style_sim += r.style_sim / n;
        report.mean_b_psnr += r.b_psnr / n;
    }
    if (gen_feats.size() >= 2 && real_feats.size() >= 2) {
        report.s_fid = s_fid(gen_feats, real_feats);
        report.s_fid_valid = true;
    }
    return report;
}

std::string report_to_json(const EvalReport& report) {
    json j;
    j["means"] = {{"sen_acc", report.mean_sen_acc},
                  {"ned", report.mean_ned},
                  {"spatial_iou", report.mean_spatial_iou},
                  {"style_sim", report.mean_style_sim},
                  {"b_psnr", report.mean_b_psnr}};
    if (report.s_fid_valid)
        j["s_fid"] = {{"value", report.s_fid.value}, {"regularized", report.s_fid.regularized}};
    j["records"] = json::array();
    for (const auto& r : report.records)
        j["records"].push_back({{"sen_acc", r.sen_acc},
                                {"ned", r.ned},
                                {"spatial_iou", r.spatial_iou},
                                {"style_sim", r.style_sim},
                                {"b_psnr", r.b_psnr}});
    j["metadata"] = json::parse(report.metadata_json);
    return j.dump(2);
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_report: cannot open " + path);
    f << report_to_json(report) << "\n";
}

}  // namespace gf::evalharness
