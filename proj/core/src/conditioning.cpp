#include "vdc/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "vdc/linalg.hpp"
#include "vdc/tensor_io.hpp"

namespace vdc {

void Clip::validate() const {
    require_rank(frames, 4, "Clip.frames");
    require_finite(frames, "Clip.frames");
    const std::size_t c = frames.extent(1);
    if (c != 1 && c != 3) {
        throw ShapeError("Clip: channel count must be 1 or 3, got " + std::to_string(c));
    }
    if (!(native_fps > 0.0)) throw ArgumentError("Clip: fps must be positive");
}

Tensor grayscale(const Tensor& frames) {
    require_rank(frames, 4, "grayscale");
    const std::size_t t = frames.extent(0), c = frames.extent(1);
    const std::size_t h = frames.extent(2), w = frames.extent(3);
    if (c == 1) return frames;
    if (c != 3) throw ShapeError("grayscale expects 1 or 3 channels");
    Tensor out({t, 1, h, w});
    for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t z = 0; z < w; ++z)
                out(tt, 0, y, z) = 0.299 * frames(tt, 0, y, z) +
                                   0.587 * frames(tt, 1, y, z) +
                                   0.114 * frames(tt, 2, y, z);
    return out;
}

namespace {

// Overlap weights of target cell i against source cells for a box resample
// from `src` to `dst` cells of uniform width.
struct Overlap {
    std::size_t first;
    std::vector<double> weights;  // normalized to sum 1
};

std::vector<Overlap> box_overlaps(std::size_t src, std::size_t dst) {
    std::vector<Overlap> table(dst);
    const double ratio = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
        const double lo = static_cast<double>(i) * ratio;
        const double hi = static_cast<double>(i + 1) * ratio;
        auto first = static_cast<std::size_t>(lo);
        if (first >= src) first = src - 1;
        Overlap& cell = table[i];
        cell.first = first;
        for (std::size_t s = first; s < src && static_cast<double>(s) < hi; ++s) {
            const double overlap =
                std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
            if (overlap <= 0.0) break;
            cell.weights.push_back(overlap / ratio);
        }
        if (cell.weights.empty()) cell.weights.push_back(1.0);
    }
    return table;
}

}  // namespace

Tensor resample_area(const Tensor& frames, std::size_t height, std::size_t width) {
    require_rank(frames, 4, "resample_area");
    if (height < 1 || width < 1) throw ArgumentError("resample target must be positive");
    const std::size_t t = frames.extent(0), c = frames.extent(1);
    const std::size_t h = frames.extent(2), w = frames.extent(3);
    const auto rows = box_overlaps(h, height);
    const auto cols = box_overlaps(w, width);

    Tensor out({t, c, height, width});
    for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t cc = 0; cc < c; ++cc)
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t z = 0; z < width; ++z) {
                    double acc = 0.0;
                    for (std::size_t a = 0; a < rows[y].weights.size(); ++a)
                        for (std::size_t b = 0; b < cols[z].weights.size(); ++b)
                            acc += rows[y].weights[a] * cols[z].weights[b] *
                                   frames(tt, cc, rows[y].first + a, cols[z].first + b);
                    out(tt, cc, y, z) = acc;
                }
    return out;
}

MotionDescriptor motion_descriptor(const Clip& clip, std::size_t height, std::size_t width) {
    clip.validate();
    const std::size_t t = clip.frames.extent(0);
    if (t < 1) throw ArgumentError("motion_descriptor: empty clip");

    const Tensor gray = grayscale(clip.frames);
    const Tensor small = resample_area(gray, height, width);
    const Tensor flat = small.reshaped({t, height * width});

    const SvdResult d = svd(flat);
    MotionDescriptor desc;
    desc.bucket_height = height;
    desc.bucket_width = width;
    desc.singular_values.assign(d.s.data().begin(), d.s.data().end());
    // Rank cannot exceed the pixel count; pad so there is one entry per frame.
    desc.singular_values.resize(t, 0.0);
    // Drop rounding dust so a rank-1 (static) clip yields exactly (s, 0, ..., 0).
    const double cutoff = 1e-12 * desc.singular_values.front();
    for (double& s : desc.singular_values) {
        if (s < cutoff) s = 0.0;
    }

    double total = 0.0;
    for (double s : desc.singular_values) total += s;
    if (total <= 0.0) {
        throw DomainError("motion_descriptor: all-zero clip has no normalizable spectrum");
    }
    double cumulative = 0.0;
    double area = 0.0;
    for (double s : desc.singular_values) {
        cumulative += s;
        area += cumulative / total;
    }
    desc.area = area / static_cast<double>(t);
    return desc;
}

Clip fps_stride(const Clip& clip, std::size_t k, std::size_t target_frames) {
    clip.validate();
    if (k < 1 || k > 4) {
        throw ArgumentError("fps_stride: stride must lie in 1..4, got " + std::to_string(k));
    }
    if (target_frames < 1) throw ArgumentError("fps_stride: need at least one frame");
    const std::size_t t = clip.frames.extent(0);
    if (t < k * target_frames) {
        throw ArgumentError("fps_stride: clip has " + std::to_string(t) +
                            " frames, need at least " + std::to_string(k * target_frames));
    }
    const std::size_t c = clip.frames.extent(1);
    const std::size_t h = clip.frames.extent(2), w = clip.frames.extent(3);
    Tensor out({target_frames, c, h, w});
    const std::size_t frame_len = c * h * w;
    for (std::size_t i = 0; i < target_frames; ++i) {
        const std::size_t src = i * k;
        std::copy_n(clip.frames.data().data() + src * frame_len, frame_len,
                    out.data().data() + i * frame_len);
    }
    return Clip{std::move(out), clip.native_fps / static_cast<double>(k)};
}

int motion_bucket_id(double area, const BucketConfig& config) {
    if (!(config.area_hi > config.area_lo)) throw ArgumentError("empty bucket area range");
    double unit = (area - config.area_lo) / (config.area_hi - config.area_lo);
    unit = std::clamp(unit, 0.0, 1.0);
    if (config.invert) unit = 1.0 - unit;
    const double span = static_cast<double>(config.id_max - config.id_min);
    return config.id_min + static_cast<int>(std::lround(unit * span));
}

Clip load_clip(const std::filesystem::path& path, double fallback_fps) {
    if (std::filesystem::is_directory(path)) {
        std::ifstream meta_in(path / "meta.json");
        if (!meta_in) throw IoError("missing meta.json sidecar in " + path.string());
        nlohmann::json meta = nlohmann::json::parse(meta_in, nullptr, false);
        if (meta.is_discarded()) throw IoError("malformed meta.json in " + path.string());
        const auto width = meta.at("width").get<std::size_t>();
        const auto height = meta.at("height").get<std::size_t>();
        const double fps = meta.value("fps", fallback_fps);

        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(path)) {
            if (entry.path().filename() == "meta.json") continue;
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw IoError("no frame files in " + path.string());

        const std::size_t frame_bytes = width * height * 3;
        Tensor frames({files.size(), 3, height, width});
        for (std::size_t t = 0; t < files.size(); ++t) {
            std::ifstream in(files[t], std::ios::binary);
            std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                             std::istreambuf_iterator<char>());
            if (bytes.size() != frame_bytes) {
                throw IoError("frame " + files[t].string() + " has " +
                              std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(frame_bytes));
            }
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t z = 0; z < width; ++z)
                    for (std::size_t cc = 0; cc < 3; ++cc)
                        frames(t, cc, y, z) =
                            static_cast<double>(bytes[(y * width + z) * 3 + cc]) / 255.0;
        }
        Clip clip{std::move(frames), fps};
        clip.validate();
        return clip;
    }

    Tensor frames = read_mvdt(path);
    if (frames.rank() == 3) {
        frames = frames.reshaped({frames.extent(0), 1, frames.extent(1), frames.extent(2)});
    }
    double fps = fallback_fps;
    const std::filesystem::path sidecar = path.string() + ".json";
    if (std::filesystem::exists(sidecar)) {
        std::ifstream in(sidecar);
        nlohmann::json meta = nlohmann::json::parse(in, nullptr, false);
        if (!meta.is_discarded()) fps = meta.value("fps", fallback_fps);
    }
    Clip clip{std::move(frames), fps};
    clip.validate();
    return clip;
}

}  // namespace vdc
