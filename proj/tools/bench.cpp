// Benchmark comparing the serial reference implementations against the
// OpenMP kernels. Prints one table row per kernel/size.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "msmae/kernels.hpp"
#include "msmae/rng.hpp"
#include "ref.hpp"

using clk = std::chrono::steady_clock;

static double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm-up
    auto t0 = clk::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = clk::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

static std::vector<double> randu(std::size_t n, std::uint64_t key) {
    msmae::Rng rng(key);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform() * 2.0 - 1.0;
    return v;
}

static void row(const char* name, const char* size, double serial, double parallel,
                double max_abs_diff) {
    std::printf("%-14s %-14s %10.3f %10.3f %8.2fx   %.3e\n", name, size, serial, parallel,
                serial / parallel, max_abs_diff);
}

static double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

int main() {
    std::printf("%-14s %-14s %10s %10s %9s   %s\n", "kernel", "size", "serial ms",
                "openmp ms", "speedup", "max |diff|");

    {
        std::size_t n = 192, k = 256, m = 192;
        auto a = randu(n * k, 1), b = randu(k * m, 2);
        std::vector<double> c1(n * m), c2(n * m);
        double ts = time_ms([&] { msmae::ref::matmul(a.data(), b.data(), c1.data(), n, k, m); }, 3);
        double tp = time_ms([&] { msmae::kernels::matmul(a.data(), b.data(), c2.data(), n, k, m); }, 3);
        row("matmul", "192x256x192", ts, tp, max_diff(c1, c2));
    }
    {
        std::size_t n = 4096, d = 256;
        auto x = randu(n * d, 3), g = randu(d, 4), be = randu(d, 5);
        std::vector<double> y1(n * d), y2(n * d), mean(n), rstd(n);
        double ts = time_ms(
            [&] { msmae::ref::layernorm(x.data(), g.data(), be.data(), y1.data(), n, d, 1e-6); }, 5);
        double tp = time_ms(
            [&] {
                msmae::kernels::layernorm_forward(x.data(), g.data(), be.data(), y2.data(), mean.data(),
                                         rstd.data(), n, d, 1e-6);
            },
            5);
        row("layernorm", "4096x256", ts, tp, max_diff(y1, y2));
    }
    {
        std::size_t ih = 28, iw = 28, cin = 64, cout = 32, kk = 4, st = 2, pd = 1;
        std::size_t oh = msmae::kernels::tconv2d_out_side(ih, kk, st, pd);
        auto in = randu(ih * iw * cin, 6), w = randu(kk * kk * cin * cout, 7), bi = randu(cout, 8);
        std::vector<double> o1(oh * oh * cout), o2(oh * oh * cout);
        double ts = time_ms(
            [&] {
                msmae::ref::tconv2d(in.data(), ih, iw, cin, w.data(), bi.data(), kk, st, pd,
                                    o1.data(), oh, oh, cout);
            },
            5);
        double tp = time_ms(
            [&] {
                msmae::kernels::tconv2d_forward(in.data(), ih, iw, cin, w.data(), bi.data(), kk, st, pd,
                                       o2.data(), oh, oh, cout);
            },
            5);
        row("tconv2d", "28^2x64->56^2", ts, tp, max_diff(o1, o2));
    }
    {
        std::size_t h = 56, w = 56, c = 64;
        auto in = randu(h * w * c, 9), wg = randu(c * 9, 10), bi = randu(c, 11);
        std::vector<double> o1(h * w * c), o2(h * w * c);
        double ts = time_ms(
            [&] { msmae::ref::dwconv3x3(in.data(), h, w, c, wg.data(), bi.data(), o1.data()); }, 5);
        double tp = time_ms(
            [&] { msmae::kernels::dwconv3x3_forward(in.data(), h, w, c, wg.data(), bi.data(), o2.data()); },
            5);
        row("dwconv3x3", "56^2x64", ts, tp, max_diff(o1, o2));
    }
    return 0;
}
