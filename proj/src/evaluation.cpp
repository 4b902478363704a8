#include "iaunet/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace iaunet::eval {

namespace {

struct Counts {
    std::int64_t inter = 0, pred = 0, gt = 0;
};

Counts overlap_counts(const Mask& pred, const Mask& gt) {
    if (!pred.same_shape(gt))
        throw DimensionError("mask metric: shape mismatch " + pred.shape_str() + " vs " + gt.shape_str());
    Counts c;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        c.inter += p && g;
        c.pred += p;
        c.gt += g;
    }
    return c;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

double dice_score(const Mask& pred, const Mask& gt) {
    const Counts c = overlap_counts(pred, gt);
    if (c.pred + c.gt == 0) return 1.0;  // both empty
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.pred + c.gt);
}

double iou_score(const Mask& pred, const Mask& gt) {
    const Counts c = overlap_counts(pred, gt);
    const std::int64_t uni = c.pred + c.gt - c.inter;
    if (uni == 0) return 1.0;  // both empty
    return static_cast<double>(c.inter) / static_cast<double>(uni);
}

MetricReport make_report(std::vector<ImageMetrics> per_image, std::optional<int> fold_id) {
    MetricReport r;
    r.per_image = std::move(per_image);
    std::sort(r.per_image.begin(), r.per_image.end(),
              [](const ImageMetrics& a, const ImageMetrics& b) { return a.id < b.id; });
    r.fold_id = fold_id;
    const std::size_t n = r.per_image.size();
    if (n == 0) return r;
    double sd = 0.0, si = 0.0;
    for (const auto& m : r.per_image) {
        sd += m.dice;
        si += m.iou;
    }
    r.dice_mean = sd / static_cast<double>(n);
    r.iou_mean = si / static_cast<double>(n);
    double vd = 0.0, vi = 0.0;
    for (const auto& m : r.per_image) {
        vd += (m.dice - r.dice_mean) * (m.dice - r.dice_mean);
        vi += (m.iou - r.iou_mean) * (m.iou - r.iou_mean);
    }
    r.dice_std = std::sqrt(vd / static_cast<double>(n));
    r.iou_std = std::sqrt(vi / static_cast<double>(n));
    return r;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& m : per_image) per.push_back({{"id", m.id}, {"dice", m.dice}, {"iou", m.iou}});
    nlohmann::json agg = {{"dice_mean", dice_mean},
                          {"dice_std", dice_std},
                          {"iou_mean", iou_mean},
                          {"iou_std", iou_std}};
    nlohmann::json j = {{"per_image", per}, {"aggregate", agg}};
    if (fold_id) j["fold_id"] = *fold_id;
    return j;
}

namespace {

std::string pad_left(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace

std::string format_comparison_text(const NamedScores& methods) {
    if (methods.empty()) throw UsageError("comparison table needs at least one method");
    double best_dice = methods[0].second.first, best_iou = methods[0].second.second;
    for (const auto& m : methods) {
        best_dice = std::max(best_dice, m.second.first);
        best_iou = std::max(best_iou, m.second.second);
    }
    auto cell = [&](double v, double best) {
        const std::string s = fixed4(v);
        return v == best ? "*" + s + "*" : s;
    };
    std::vector<std::size_t> widths;
    for (const auto& m : methods) {
        std::size_t w = m.first.size();
        w = std::max(w, cell(m.second.first, best_dice).size());
        w = std::max(w, cell(m.second.second, best_iou).size());
        widths.push_back(w);
    }
    std::ostringstream os;
    os << pad_right("Metric", 8);
    for (std::size_t i = 0; i < methods.size(); ++i) os << "  " << pad_left(methods[i].first, widths[i]);
    os << "\n" << pad_right("Dice", 8);
    for (std::size_t i = 0; i < methods.size(); ++i)
        os << "  " << pad_left(cell(methods[i].second.first, best_dice), widths[i]);
    os << "\n" << pad_right("IoU", 8);
    for (std::size_t i = 0; i < methods.size(); ++i)
        os << "  " << pad_left(cell(methods[i].second.second, best_iou), widths[i]);
    os << "\n";
    return os.str();
}

std::string format_comparison_csv(const NamedScores& methods) {
    if (methods.empty()) throw UsageError("comparison table needs at least one method");
    std::ostringstream os;
    os << "metric";
    for (const auto& m : methods) os << "," << m.first;
    os << "\ndice";
    for (const auto& m : methods) os << "," << fixed4(m.second.first);
    os << "\niou";
    for (const auto& m : methods) os << "," << fixed4(m.second.second);
    os << "\n";
    return os.str();
}

void write_comparison_table(const NamedScores& methods, const std::string& text_path, const std::string& csv_path) {
    std::ofstream t(text_path);
    if (!t) throw IoError("cannot write " + text_path);
    t << format_comparison_text(methods);
    std::ofstream c(csv_path);
    if (!c) throw IoError("cannot write " + csv_path);
    c << format_comparison_csv(methods);
}

void write_overlay(const nn::Tensor<float>& image_chw, const Mask& pred, const Mask& gt, const std::string& path,
                   double alpha) {
    if (image_chw.ndim() != 3 || image_chw.dim(0) != 3) throw UsageError("write_overlay: expects [3,H,W] image");
    const int H = image_chw.dim(1), W = image_chw.dim(2);
    if (pred.dim(1) != H || pred.dim(2) != W || !pred.same_shape(gt))
        throw DimensionError("write_overlay: mask extents do not match the image");
    data::Image8 img;
    img.width = W;
    img.height = H;
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(H) * W * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const std::int64_t p = static_cast<std::int64_t>(y) * W + x;
            double rgb[3];
            for (int c = 0; c < 3; ++c) rgb[c] = image_chw[(static_cast<std::int64_t>(c) * H + y) * W + x];
            const bool pp = pred[p] != 0, gg = gt[p] != 0;
            if (pp || gg) {
                double tint[3] = {0.0, 0.0, 0.0};
                if (pp && gg) {
                    tint[1] = 1.0;  // true positive: green
                } else if (pp) {
                    tint[0] = 1.0;  // false positive: red
                } else {
                    tint[2] = 1.0;  // false negative: blue
                }
                for (int c = 0; c < 3; ++c) rgb[c] = (1.0 - alpha) * rgb[c] + alpha * tint[c];
            }
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(rgb[c], 0.0, 1.0);
                img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    write_png(path, img);
}

}  // namespace iaunet::eval
