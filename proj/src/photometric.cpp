#include "coop/photometric.hpp"

namespace coop {

namespace {

inline int window_count(int h, int w, int y, int x) {
    const int ny = std::min(y + 1, h - 1) - std::max(y - 1, 0) + 1;
    const int nx = std::min(x + 1, w - 1) - std::max(x - 1, 0) + 1;
    return ny * nx;
}

GridD channel_plane(const ImageBuffer& img, int ch) {
    GridD g(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) g.at(y, x) = img.at(y, x, ch);
    return g;
}

struct SsimMoments {
    GridD bx, by, bxx, byy, bxy;
};

SsimMoments moments(const GridD& x, const GridD& y) {
    const int h = x.h, w = x.w;
    GridD xx(h, w), yy(h, w), xy(h, w);
    for (size_t i = 0; i < x.v.size(); ++i) {
        xx.v[i] = x.v[i] * x.v[i];
        yy.v[i] = y.v[i] * y.v[i];
        xy.v[i] = x.v[i] * y.v[i];
    }
    return {box3(x), box3(y), box3(xx), box3(yy), box3(xy)};
}

// SSIM numerator/denominator pieces at one pixel.
struct SsimTerms {
    double A, B, C, D;  // A=2 mx my+C1, B=2 sxy+C2, C=mx^2+my^2+C1, D=sx2+sy2+C2
};

inline SsimTerms ssim_terms(const SsimMoments& m, size_t i) {
    const double mx = m.bx.v[i], my = m.by.v[i];
    const double sx2 = m.bxx.v[i] - mx * mx;
    const double sy2 = m.byy.v[i] - my * my;
    const double sxy = m.bxy.v[i] - mx * my;
    return {2 * mx * my + kSsimC1, 2 * sxy + kSsimC2, mx * mx + my * my + kSsimC1,
            sx2 + sy2 + kSsimC2};
}

}  // namespace

GridD box3(const GridD& g) {
    const int h = g.h, w = g.w;
    GridD out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    s += g.at(yy, xx);
                }
            }
            out.at(y, x) = s / window_count(h, w, y, x);
        }
    }
    return out;
}

GridD box3_adjoint(const GridD& g) {
    const int h = g.h, w = g.w;
    GridD out(h, w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gp = g.at(y, x) / window_count(h, w, y, x);
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    out.at(yy, xx) += gp;
                }
            }
        }
    }
    return out;
}

GridD ssim_map(const ImageBuffer& x, const ImageBuffer& y) {
    if (!x.same_shape(y)) throw DimensionMismatch("ssim: image shapes differ");
    GridD out(x.h, x.w, 0.0);
    for (int ch = 0; ch < x.c; ++ch) {
        const GridD xp = channel_plane(x, ch), yp = channel_plane(y, ch);
        const SsimMoments m = moments(xp, yp);
        for (size_t i = 0; i < out.v.size(); ++i) {
            const SsimTerms t = ssim_terms(m, i);
            out.v[i] += (t.A * t.B) / (t.C * t.D);
        }
    }
    for (auto& v : out.v) v /= x.c;
    return out;
}

ImageBuffer ssim_backward(const ImageBuffer& x, const ImageBuffer& y, const GridD& upstream) {
    if (!x.same_shape(y)) throw DimensionMismatch("ssim_backward: image shapes differ");
    if (upstream.h != x.h || upstream.w != x.w) {
        throw DimensionMismatch("ssim_backward: upstream shape differs");
    }
    ImageBuffer grad(x.h, x.w, x.c);
    const double cinv = 1.0 / x.c;
    for (int ch = 0; ch < x.c; ++ch) {
        const GridD xp = channel_plane(x, ch), yp = channel_plane(y, ch);
        const SsimMoments m = moments(xp, yp);
        GridD g_by(x.h, x.w), g_byy(x.h, x.w), g_bxy(x.h, x.w);
        for (size_t i = 0; i < upstream.v.size(); ++i) {
            const SsimTerms t = ssim_terms(m, i);
            const double S = (t.A * t.B) / (t.C * t.D);
            const double u = upstream.v[i] * cinv;
            const double mx = m.bx.v[i], my = m.by.v[i];
            // dS/dby: A' = 2mx, B' = -2mx (through sxy), C' = 2my, D' = -2my
            const double dS_dby =
                (2 * mx * t.B + t.A * (-2 * mx)) / (t.C * t.D) - S * (2 * my / t.C - 2 * my / t.D);
            const double dS_dbyy = -S / t.D;          // D' = 1
            const double dS_dbxy = 2 * t.A / (t.C * t.D);  // B' = 2
            g_by.v[i] = u * dS_dby;
            g_byy.v[i] = u * dS_dbyy;
            g_bxy.v[i] = u * dS_dbxy;
        }
        const GridD a_by = box3_adjoint(g_by);
        const GridD a_byy = box3_adjoint(g_byy);
        const GridD a_bxy = box3_adjoint(g_bxy);
        for (int yy = 0; yy < x.h; ++yy) {
            for (int xx = 0; xx < x.w; ++xx) {
                grad.at(yy, xx, ch) += a_by.at(yy, xx) + 2 * yp.at(yy, xx) * a_byy.at(yy, xx) +
                                       xp.at(yy, xx) * a_bxy.at(yy, xx);
            }
        }
    }
    return grad;
}

GridD photometric_error(const ImageBuffer& x, const ImageBuffer& y, double alpha) {
    if (!x.same_shape(y)) throw DimensionMismatch("photometric_error: image shapes differ");
    GridD phi = ssim_map(x, y);
    for (auto& v : phi.v) v = alpha * (1.0 - v) / 2.0;
    const double l1w = (1.0 - alpha) / x.c;
    for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) {
            double l1 = 0;
            for (int ch = 0; ch < x.c; ++ch) l1 += std::abs(x.at(yy, xx, ch) - y.at(yy, xx, ch));
            phi.at(yy, xx) += l1w * l1;
        }
    }
    return phi;
}

ImageBuffer photometric_backward(const ImageBuffer& x, const ImageBuffer& y,
                                 const GridD& upstream, double alpha) {
    if (!x.same_shape(y)) throw DimensionMismatch("photometric_backward: image shapes differ");
    GridD ssim_up(upstream.h, upstream.w);
    for (size_t i = 0; i < upstream.v.size(); ++i) ssim_up.v[i] = upstream.v[i] * (-alpha / 2.0);
    ImageBuffer grad = ssim_backward(x, y, ssim_up);
    const double l1w = (1.0 - alpha) / x.c;
    for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) {
            const double u = upstream.at(yy, xx) * l1w;
            for (int ch = 0; ch < x.c; ++ch) {
                const double d = y.at(yy, xx, ch) - x.at(yy, xx, ch);
                grad.at(yy, xx, ch) += u * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
            }
        }
    }
    return grad;
}

MinReprojection min_reprojection_error(
    const ImageBuffer& target,
    const std::vector<std::pair<const ImageBuffer*, const PixelMask*>>& candidates,
    double alpha) {
    if (candidates.empty()) throw EmptyCandidateList("min_reprojection_error: no candidates");
    std::vector<GridD> phis;
    phis.reserve(candidates.size());
    for (const auto& [img, mask] : candidates) {
        if (!target.same_shape(*img) || mask->h() != target.h || mask->w() != target.w) {
            throw DimensionMismatch("min_reprojection_error: candidate shape differs");
        }
        phis.push_back(photometric_error(target, *img, alpha));
    }
    MinReprojection out{GridD(target.h, target.w, 0.0), PixelMask(target.h, target.w),
                        Grid<int>(target.h, target.w, -1)};
    for (int y = 0; y < target.h; ++y) {
        for (int x = 0; x < target.w; ++x) {
            double best = 0;
            int best_i = -1;
            for (size_t i = 0; i < candidates.size(); ++i) {
                if (!candidates[i].second->at(y, x)) continue;
                const double e = phis[i].at(y, x);
                if (best_i < 0 || e < best) {
                    best = e;
                    best_i = static_cast<int>(i);
                }
            }
            if (best_i >= 0) {
                out.error.at(y, x) = best;
                out.valid.set(y, x, true);
                out.argmin.at(y, x) = best_i;
            }
        }
    }
    return out;
}

}  // namespace coop
