#include "msmae/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include <png.h>

#include "msmae/rng.hpp"

namespace msmae {

RasterImage load_png(const std::string& path, double gsd) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("load_png: " + path + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error("load_png: " + path + ": " + image.message);
    }
    Tensor px({image.height, image.width, 3});
    for (std::size_t i = 0; i < px.numel(); ++i) px[i] = buf[i] / 255.0;
    return {std::move(px), gsd};
}

void save_png(const RasterImage& img, const std::string& path) {
    std::size_t c = img.channels();
    if (c != 1 && c != 3)
        throw std::invalid_argument("save_png: only 1- or 3-channel images");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(img.pixels.numel());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        double v = std::clamp(img.pixels[i], 0.0, 1.0);
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("save_png: " + path + ": " + image.message);
}

namespace {

// Exact footprint-overlap area averaging; handles fractional scale factors.
Tensor area_shrink(const Tensor& in, std::size_t oh, std::size_t ow) {
    std::size_t ih = in.dim(0), iw = in.dim(1), c = in.dim(2);
    double sy = double(ih) / double(oh);
    double sx = double(iw) / double(ow);
    Tensor out({oh, ow, c});
#pragma omp parallel for schedule(static)
    for (std::int64_t oy = 0; oy < std::int64_t(oh); ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double y0 = double(oy) * sy, y1 = double(oy + 1) * sy;
            double x0 = double(ox) * sx, x1 = double(ox + 1) * sx;
            auto iy0 = std::size_t(std::floor(y0));
            auto iy1 = std::min(ih, std::size_t(std::ceil(y1)));
            auto ix0 = std::size_t(std::floor(x0));
            auto ix1 = std::min(iw, std::size_t(std::ceil(x1)));
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t iy = iy0; iy < iy1; ++iy) {
                    double wy = std::min(y1, double(iy + 1)) - std::max(y0, double(iy));
                    if (wy <= 0.0) continue;
                    for (std::size_t ix = ix0; ix < ix1; ++ix) {
                        double wx = std::min(x1, double(ix + 1)) - std::max(x0, double(ix));
                        if (wx <= 0.0) continue;
                        acc += wy * wx * in.at(iy, ix, ch);
                    }
                }
                out.at(std::size_t(oy), ox, ch) = acc / (sy * sx);
            }
        }
    }
    return out;
}

// Catmull-Rom cubic weight (a = -0.5), |t| in [0, 2).
double cubic_w(double t) {
    constexpr double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct Taps {
    std::int64_t i0;
    double w[4];
};

// Per-output-index source taps for one axis, clamp-to-edge, weights
// normalized so constants are preserved exactly.
std::vector<Taps> cubic_taps(std::size_t in_n, std::size_t out_n) {
    double scale = double(in_n) / double(out_n);
    std::vector<Taps> taps(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
        double src = (double(o) + 0.5) * scale - 0.5;
        double base = std::floor(src);
        double frac = src - base;
        Taps t;
        t.i0 = std::int64_t(base) - 1;
        double sum = 0.0;
        for (int j = 0; j < 4; ++j) {
            t.w[j] = cubic_w(double(j - 1) - frac);
            sum += t.w[j];
        }
        for (double& w : t.w) w /= sum;
        taps[o] = t;
    }
    return taps;
}

Tensor bicubic_enlarge(const Tensor& in, std::size_t oh, std::size_t ow) {
    std::size_t ih = in.dim(0), iw = in.dim(1), c = in.dim(2);
    auto tx = cubic_taps(iw, ow);
    auto ty = cubic_taps(ih, oh);

    Tensor mid({ih, ow, c});
#pragma omp parallel for schedule(static)
    for (std::int64_t y = 0; y < std::int64_t(ih); ++y)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const Taps& t = tx[ox];
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int j = 0; j < 4; ++j) {
                    auto ix = std::size_t(std::clamp<std::int64_t>(t.i0 + j, 0,
                                                                   std::int64_t(iw) - 1));
                    acc += t.w[j] * in.at(std::size_t(y), ix, ch);
                }
                mid.at(std::size_t(y), ox, ch) = acc;
            }
        }

    Tensor out({oh, ow, c});
#pragma omp parallel for schedule(static)
    for (std::int64_t oy = 0; oy < std::int64_t(oh); ++oy) {
        const Taps& t = ty[std::size_t(oy)];
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int j = 0; j < 4; ++j) {
                    auto iy = std::size_t(std::clamp<std::int64_t>(t.i0 + j, 0,
                                                                   std::int64_t(ih) - 1));
                    acc += t.w[j] * mid.at(iy, ox, ch);
                }
                out.at(std::size_t(oy), ox, ch) = acc;
            }
    }
    return out;
}

} // namespace

RasterImage resample(const RasterImage& img, std::size_t out_h, std::size_t out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resample: empty output");
    std::size_t h = img.height(), w = img.width();
    if (out_h * w != out_w * h)
        throw std::invalid_argument(
            "resample: x and y scale factors differ; a single gsd cannot represent that");
    double out_gsd = img.gsd * double(h) / double(out_h);
    if (out_h == h && out_w == w) return {img.pixels, out_gsd};
    Tensor px = out_h < h ? area_shrink(img.pixels, out_h, out_w)
                          : bicubic_enlarge(img.pixels, out_h, out_w);
    return {std::move(px), out_gsd};
}

Tensor enlarge_bicubic(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    if (x.ndim() != 3) throw std::invalid_argument("enlarge_bicubic: want (h, w, c)");
    if (out_h < x.dim(0) || out_w < x.dim(1))
        throw std::invalid_argument("enlarge_bicubic: output smaller than input");
    if (out_h == x.dim(0) && out_w == x.dim(1)) return x;
    return bicubic_enlarge(x, out_h, out_w);
}

namespace {

// For each input index, the (output index, weight) pairs that read it.
std::vector<std::vector<std::pair<std::size_t, double>>> transposed_taps(std::size_t in_n,
                                                                         std::size_t out_n) {
    auto taps = cubic_taps(in_n, out_n);
    std::vector<std::vector<std::pair<std::size_t, double>>> tr(in_n);
    for (std::size_t o = 0; o < out_n; ++o)
        for (int j = 0; j < 4; ++j) {
            auto i = std::size_t(
                std::clamp<std::int64_t>(taps[o].i0 + j, 0, std::int64_t(in_n) - 1));
            tr[i].emplace_back(o, taps[o].w[j]);
        }
    return tr;
}

} // namespace

Tensor enlarge_bicubic_adjoint(const Tensor& dy, std::size_t in_h, std::size_t in_w) {
    if (dy.ndim() != 3) throw std::invalid_argument("enlarge_bicubic_adjoint: want (h, w, c)");
    std::size_t oh = dy.dim(0), ow = dy.dim(1), c = dy.dim(2);
    if (oh < in_h || ow < in_w)
        throw std::invalid_argument("enlarge_bicubic_adjoint: output smaller than input");
    if (oh == in_h && ow == in_w) return dy;
    auto try_ = transposed_taps(in_h, oh);
    auto trx = transposed_taps(in_w, ow);

    // Undo the passes in reverse order, as gathers over the input grid so
    // rows stay disjoint across threads.
    Tensor dmid({in_h, ow, c});
#pragma omp parallel for schedule(static)
    for (std::int64_t iy = 0; iy < std::int64_t(in_h); ++iy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (auto& [oy, wt] : try_[std::size_t(iy)]) acc += wt * dy.at(oy, ox, ch);
                dmid.at(std::size_t(iy), ox, ch) = acc;
            }

    Tensor dx({in_h, in_w, c});
#pragma omp parallel for schedule(static)
    for (std::int64_t y = 0; y < std::int64_t(in_h); ++y)
        for (std::size_t ix = 0; ix < in_w; ++ix)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (auto& [ox, wt] : trx[ix]) acc += wt * dmid.at(std::size_t(y), ox, ch);
                dx.at(std::size_t(y), ix, ch) = acc;
            }
    return dx;
}

RasterImage crop(const RasterImage& img, std::size_t oy, std::size_t ox,
                 std::size_t h, std::size_t w) {
    if (oy + h > img.height() || ox + w > img.width())
        throw std::invalid_argument("crop: window exceeds image bounds");
    std::size_t c = img.channels();
    Tensor px({h, w, c});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                px.at(y, x, ch) = img.pixels.at(oy + y, ox + x, ch);
    return {std::move(px), img.gsd};
}

RasterImage random_crop(const RasterImage& img, std::size_t size, std::uint64_t seed) {
    if (img.height() < size || img.width() < size)
        throw std::invalid_argument(
            "random_crop: image smaller than crop size; resample it up first");
    Rng rng(seed);
    std::size_t oy = rng.below(img.height() - size + 1);
    std::size_t ox = rng.below(img.width() - size + 1);
    return crop(img, oy, ox, size, size);
}

RasterImage make_input(const RasterImage& hr, std::size_t input_size) {
    if (hr.height() != hr.width())
        throw std::invalid_argument("make_input: source must be square");
    if (input_size < 1 || hr.height() % input_size != 0)
        throw std::invalid_argument("make_input: input size must divide the source side");
    return resample(hr, input_size, input_size);
}

BandpassTargets build_targets(const RasterImage& hr, std::size_t input_size,
                              std::size_t r_low, std::size_t r_high_low) {
    if (hr.height() != hr.width())
        throw std::invalid_argument("build_targets: source must be square");
    std::size_t side = hr.height();
    if (r_low < 1 || r_high_low < 1)
        throw std::invalid_argument("build_targets: degenerate pyramid size");
    if (!(r_low < input_size && input_size < side && r_high_low < side))
        throw std::invalid_argument(
            "build_targets: need r_low < input_size < source side and r_high_low < source side");

    BandpassTargets t;
    t.low = resample(resample(hr, r_low, r_low), input_size, input_size);
    t.blur_hr = resample(resample(hr, r_high_low, r_high_low), side, side);
    Tensor high(hr.pixels.shape());
    for (std::size_t i = 0; i < high.numel(); ++i)
        high[i] = hr.pixels[i] - t.blur_hr.pixels[i];
    t.high = {std::move(high), hr.gsd};
    return t;
}

} // namespace msmae
