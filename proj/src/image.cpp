#include "coop/image.hpp"

namespace coop {

void ImageBuffer::validate() const {
    for (double x : v) {
        if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
            throw std::invalid_argument("image values must be finite and within [0, 1]");
        }
    }
}

GridD downsample2(const GridD& g) {
    const int oh = (g.h + 1) / 2, ow = (g.w + 1) / 2;
    GridD out(oh, ow, 0.0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            int n = 0;
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const int yy = 2 * y + dy, xx = 2 * x + dx;
                    if (yy < g.h && xx < g.w) {
                        s += g.at(yy, xx);
                        ++n;
                    }
                }
            }
            out.at(y, x) = s / n;
        }
    }
    return out;
}

GridD downsample2_adjoint(const GridD& coarse, int fine_h, int fine_w) {
    GridD out(fine_h, fine_w, 0.0);
    for (int y = 0; y < coarse.h; ++y) {
        for (int x = 0; x < coarse.w; ++x) {
            int n = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    if (2 * y + dy < fine_h && 2 * x + dx < fine_w) ++n;
            const double g = coarse.at(y, x) / n;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    if (2 * y + dy < fine_h && 2 * x + dx < fine_w)
                        out.at(2 * y + dy, 2 * x + dx) += g;
        }
    }
    return out;
}

ImageBuffer downsample2(const ImageBuffer& img) {
    const int oh = (img.h + 1) / 2, ow = (img.w + 1) / 2;
    ImageBuffer out(oh, ow, img.c);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int ch = 0; ch < img.c; ++ch) {
                double s = 0;
                int n = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int yy = 2 * y + dy, xx = 2 * x + dx;
                        if (yy < img.h && xx < img.w) {
                            s += img.at(yy, xx, ch);
                            ++n;
                        }
                    }
                }
                out.at(y, x, ch) = s / n;
            }
        }
    }
    return out;
}

PixelMask downsample2(const PixelMask& mask) {
    const int oh = (mask.h() + 1) / 2, ow = (mask.w() + 1) / 2;
    PixelMask out(oh, ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            int n = 0, t = 0;
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const int yy = 2 * y + dy, xx = 2 * x + dx;
                    if (yy < mask.h() && xx < mask.w()) {
                        ++n;
                        t += mask.at(yy, xx) ? 1 : 0;
                    }
                }
            }
            out.set(y, x, 2 * t >= n);
        }
    }
    return out;
}

FlowField downsample2_flow(const FlowField& f) {
    FlowField out;
    out.x = downsample2(f.x);
    out.y = downsample2(f.y);
    for (auto& v : out.x.v) v *= 0.5;
    for (auto& v : out.y.v) v *= 0.5;
    return out;
}

ImagePyramid build_pyramid(const ImageBuffer& image, int levels) {
    if (levels < 1) throw std::invalid_argument("pyramid needs at least one level");
    const int maxdim = std::min(image.h, image.w);
    int allowed = 1;
    while ((maxdim >> allowed) >= 1) ++allowed;  // 1 + floor(log2(maxdim))
    if (levels > allowed) {
        throw std::invalid_argument("pyramid level count exceeds log2 of the smaller dimension");
    }
    ImagePyramid pyr;
    pyr.levels.reserve(levels);
    pyr.levels.push_back(image);
    for (int s = 1; s < levels; ++s) pyr.levels.push_back(downsample2(pyr.levels.back()));
    return pyr;
}

double mean_intensity(const ImageBuffer& img) {
    double s = 0;
    for (double x : img.v) s += x;
    return img.v.empty() ? 0.0 : s / img.v.size();
}

}  // namespace coop
