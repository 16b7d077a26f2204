#include "curbsight/geometry.hpp"

#include "curbsight/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace curbsight::geometry {

namespace {

constexpr double kPi = std::numbers::pi;

double deg2rad(double d) { return d * kPi / 180.0; }

struct Rotation {
    // world = R * cam, columns are the camera axes in world coordinates
    double m[3][3];

    Vec3 apply(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }

    Vec3 apply_transposed(const Vec3& v) const {
        return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
                m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
                m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
    }
};

// yaw about the vertical axis (+z toward +x), then pitch about the camera
// x axis (+z toward zenith for positive pitch).
Rotation view_rotation(const PerspectiveView& view) {
    const double q = deg2rad(view.yaw_deg);
    const double p = deg2rad(view.pitch_deg);
    const double cq = std::cos(q), sq = std::sin(q);
    const double cp = std::cos(p), sp = std::sin(p);
    // R = R_yaw * R_pitch
    Rotation r;
    r.m[0][0] = cq;
    r.m[0][1] = sq * sp;
    r.m[0][2] = sq * cp;
    r.m[1][0] = 0.0;
    r.m[1][1] = cp;
    r.m[1][2] = -sp;
    r.m[2][0] = -sq;
    r.m[2][1] = cq * sp;
    r.m[2][2] = cq * cp;
    return r;
}

void check_view(const PerspectiveView& view) {
    if (view.width <= 0 || view.height <= 0) {
        throw Error("view '" + view.view_id + "': zero-sized view");
    }
    if (!(view.fov_deg > 0.0 && view.fov_deg < 180.0)) {
        throw Error("view '" + view.view_id + "': fov must be in (0, 180), got " +
                    std::to_string(view.fov_deg));
    }
}

Vec3 normalized(const Vec3& v) {
    const double n = v.norm();
    if (n == 0.0) throw Error("zero direction vector");
    return {v.x / n, v.y / n, v.z / n};
}

double wrap_x(double x, double w) {
    double r = std::fmod(x, w);
    if (r < 0.0) r += w;
    return r;
}

} // namespace

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

BoundingBox clip(const BoundingBox& box, double w, double h) {
    return {std::max(box.x_min, 0.0), std::max(box.y_min, 0.0),
            std::min(box.x_max, w), std::min(box.y_max, h)};
}

std::vector<PerspectiveView> default_views(int size) {
    std::vector<PerspectiveView> views;
    for (int i = 0; i < 4; ++i) {
        views.push_back({"v" + std::to_string(i), 90.0 * i, 0.0, 90.0, size, size});
    }
    return views;
}

Vec3 view_pixel_to_direction(const PerspectiveView& view, double px, double py) {
    check_view(view);
    if (px < 0.0 || px > view.width || py < 0.0 || py > view.height) {
        throw Error("view '" + view.view_id + "': pixel (" + std::to_string(px) + ", " +
                    std::to_string(py) + ") out of bounds");
    }
    const double tan_half_h = std::tan(deg2rad(view.fov_deg) / 2.0);
    const double tan_half_v = tan_half_h * view.height / view.width;
    const double u = (px - view.width / 2.0) / (view.width / 2.0) * tan_half_h;
    const double v = (py - view.height / 2.0) / (view.height / 2.0) * tan_half_v;
    const Vec3 cam = normalized({u, -v, 1.0});
    return view_rotation(view).apply(cam);
}

std::array<double, 2> direction_to_pano_pixel(const Vec3& dir, int pano_w, int pano_h) {
    const Vec3 d = normalized(dir);
    const double lon = std::atan2(d.x, d.z);             // (-pi, pi]
    const double lat = std::asin(std::clamp(d.y, -1.0, 1.0));
    double fx = (lon / (2.0 * kPi) + 0.5) * pano_w;
    double fy = (0.5 - lat / kPi) * pano_h;
    if (fx >= pano_w) fx -= pano_w;
    if (fx < 0.0) fx = 0.0;
    if (fy >= pano_h) fy = std::nextafter(static_cast<double>(pano_h), 0.0);
    if (fy < 0.0) fy = 0.0;
    return {fx, fy};
}

Vec3 pano_pixel_to_direction(double px, double py, int pano_w, int pano_h) {
    const double lon = (px / pano_w - 0.5) * 2.0 * kPi;
    const double lat = std::clamp(0.5 - py / pano_h, -0.5, 0.5) * kPi;
    const double cl = std::cos(lat);
    return {std::sin(lon) * cl, std::sin(lat), std::cos(lon) * cl};
}

std::optional<std::array<double, 2>> direction_to_view_pixel(const PerspectiveView& view,
                                                             const Vec3& dir) {
    check_view(view);
    const Vec3 cam = view_rotation(view).apply_transposed(normalized(dir));
    if (cam.z <= 1e-12) return std::nullopt;
    const double tan_half_h = std::tan(deg2rad(view.fov_deg) / 2.0);
    const double tan_half_v = tan_half_h * view.height / view.width;
    const double px = view.width / 2.0 + (cam.x / cam.z) / tan_half_h * (view.width / 2.0);
    const double py = view.height / 2.0 - (cam.y / cam.z) / tan_half_v * (view.height / 2.0);
    return std::array<double, 2>{px, py};
}

PanoBox view_bbox_to_pano(const PerspectiveView& view, const BoundingBox& box,
                          int pano_w, int pano_h) {
    check_view(view);
    if (!box.valid()) throw Error("view_bbox_to_pano: degenerate box");
    if (box.x_min < 0.0 || box.y_min < 0.0 || box.x_max > view.width ||
        box.y_max > view.height) {
        throw Error("view_bbox_to_pano: box out of view bounds");
    }

    // Unwrap longitudes around the box center so the hull is contiguous.
    const double cx = (box.x_min + box.x_max) / 2.0;
    const double cy = (box.y_min + box.y_max) / 2.0;
    const auto center = direction_to_pano_pixel(view_pixel_to_direction(view, cx, cy),
                                                pano_w, pano_h);
    const double x_ref = center[0];

    const double xs[3] = {box.x_min, cx, box.x_max};
    const double ys[3] = {box.y_min, cy, box.y_max};

    double x_lo = x_ref, x_hi = x_ref;
    double y_lo = center[1], y_hi = center[1];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (i == 1 && j == 1) continue; // corners and edge midpoints only
            const Vec3 d = view_pixel_to_direction(view, xs[i], ys[j]);
            const auto p = direction_to_pano_pixel(d, pano_w, pano_h);
            const double xu = p[0] + pano_w * std::round((x_ref - p[0]) / pano_w);
            x_lo = std::min(x_lo, xu);
            x_hi = std::max(x_hi, xu);
            y_lo = std::min(y_lo, p[1]);
            y_hi = std::max(y_hi, p[1]);
        }
    }

    // A pole inside the box makes the hull span the full longitude range.
    for (double pole_y : {1.0, -1.0}) {
        const auto vp = direction_to_view_pixel(view, {0.0, pole_y, 0.0});
        if (vp && (*vp)[0] >= box.x_min && (*vp)[0] <= box.x_max && (*vp)[1] >= box.y_min &&
            (*vp)[1] <= box.y_max) {
            x_lo = 0.0;
            x_hi = std::nextafter(static_cast<double>(pano_w), 0.0);
            if (pole_y > 0.0) y_lo = 0.0;
            else y_hi = pano_h;
        }
    }

    PanoBox out;
    out.box.y_min = std::clamp(y_lo, 0.0, static_cast<double>(pano_h));
    out.box.y_max = std::clamp(y_hi, 0.0, static_cast<double>(pano_h));
    if (x_lo >= 0.0 && x_hi < pano_w) {
        out.box.x_min = x_lo;
        out.box.x_max = x_hi;
        out.wraps_seam = false;
    } else {
        const double lo = wrap_x(x_lo, pano_w);
        const double hi = wrap_x(x_hi, pano_w);
        out.box.x_min = lo;
        out.box.x_max = hi;
        out.wraps_seam = lo > hi;
    }
    return out;
}

std::optional<BoundingBox> pano_box_to_view(const PerspectiveView& view, const PanoBox& pano_box,
                                            int pano_w, int pano_h) {
    check_view(view);
    const double x0 = pano_box.box.x_min;
    const double x1 =
        pano_box.wraps_seam ? pano_box.box.x_max + pano_w : pano_box.box.x_max;
    const double y0 = pano_box.box.y_min;
    const double y1 = pano_box.box.y_max;

    bool any = false;
    BoundingBox hull{1e300, 1e300, -1e300, -1e300};
    const int n = 8; // boundary samples per edge
    for (int i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) / n;
        const double edge_pts[4][2] = {{x0 + t * (x1 - x0), y0},
                                       {x0 + t * (x1 - x0), y1},
                                       {x0, y0 + t * (y1 - y0)},
                                       {x1, y0 + t * (y1 - y0)}};
        for (const auto& pt : edge_pts) {
            // longitude wraps through the trig inside pano_pixel_to_direction
            const Vec3 d = pano_pixel_to_direction(pt[0], pt[1], pano_w, pano_h);
            const auto vp = direction_to_view_pixel(view, d);
            if (!vp) continue;
            any = true;
            hull.x_min = std::min(hull.x_min, (*vp)[0]);
            hull.x_max = std::max(hull.x_max, (*vp)[0]);
            hull.y_min = std::min(hull.y_min, (*vp)[1]);
            hull.y_max = std::max(hull.y_max, (*vp)[1]);
        }
    }
    if (!any) return std::nullopt;
    return hull;
}

cv::Mat render_view(const EquirectImage& pano, const PerspectiveView& view) {
    check_view(view);
    const int w = pano.width();
    const int h = pano.height();
    if (w <= 0 || h <= 0 || w != 2 * h) {
        throw Error("panorama '" + pano.image_id + "': dimensions " + std::to_string(w) + "x" +
                    std::to_string(h) + " are not full-sphere equirectangular (width = 2*height)");
    }
    if (pano.pixels.depth() != CV_8U ||
        (pano.pixels.channels() != 1 && pano.pixels.channels() != 3)) {
        throw Error("panorama '" + pano.image_id + "': expected 8-bit 1- or 3-channel raster");
    }

    const int channels = pano.pixels.channels();
    const Rotation rot = view_rotation(view);
    const double tan_half_h = std::tan(deg2rad(view.fov_deg) / 2.0);
    const double tan_half_v = tan_half_h * view.height / view.width;

    cv::Mat out(view.height, view.width, pano.pixels.type());
    for (int j = 0; j < view.height; ++j) {
        uchar* row = out.ptr<uchar>(j);
        const double v = ((j + 0.5) - view.height / 2.0) / (view.height / 2.0) * tan_half_v;
        for (int i = 0; i < view.width; ++i) {
            const double u = ((i + 0.5) - view.width / 2.0) / (view.width / 2.0) * tan_half_h;
            const Vec3 world = rot.apply(normalized({u, -v, 1.0}));
            const double lon = std::atan2(world.x, world.z);
            const double lat = std::asin(std::clamp(world.y, -1.0, 1.0));
            const double fx = (lon / (2.0 * kPi) + 0.5) * w;
            const double fy = (0.5 - lat / kPi) * h;

            // bilinear tap at pixel centers; x wraps, y clamps
            const double gx = fx - 0.5;
            const double gy = fy - 0.5;
            const int ix = static_cast<int>(std::floor(gx));
            const int iy = static_cast<int>(std::floor(gy));
            const double wx = gx - ix;
            const double wy = gy - iy;
            const int x0 = ((ix % w) + w) % w;
            const int x1 = (x0 + 1) % w;
            const int y0 = std::clamp(iy, 0, h - 1);
            const int y1 = std::clamp(iy + 1, 0, h - 1);

            const uchar* p00 = pano.pixels.ptr<uchar>(y0) + x0 * channels;
            const uchar* p01 = pano.pixels.ptr<uchar>(y0) + x1 * channels;
            const uchar* p10 = pano.pixels.ptr<uchar>(y1) + x0 * channels;
            const uchar* p11 = pano.pixels.ptr<uchar>(y1) + x1 * channels;
            for (int c = 0; c < channels; ++c) {
                const double val = (1.0 - wy) * ((1.0 - wx) * p00[c] + wx * p01[c]) +
                                   wy * ((1.0 - wx) * p10[c] + wx * p11[c]);
                row[i * channels + c] =
                    static_cast<uchar>(std::clamp<long>(std::lround(val), 0, 255));
            }
        }
    }
    return out;
}

std::vector<std::pair<std::string, cv::Mat>> split_panorama(
    const EquirectImage& pano, const std::vector<PerspectiveView>& views) {
    if (views.empty()) throw Error("split_panorama: no views configured");
    std::vector<std::pair<std::string, cv::Mat>> out;
    out.reserve(views.size());
    for (const auto& view : views) {
        out.emplace_back(view.view_id, render_view(pano, view));
    }
    return out;
}

cv::Mat crop(const cv::Mat& image, const BoundingBox& box, double pad_fraction) {
    if (!box.valid()) throw Error("crop: degenerate box");
    if (pad_fraction < 0.0) throw Error("crop: negative pad_fraction");
    const double pad_x = pad_fraction * box.width();
    const double pad_y = pad_fraction * box.height();
    const BoundingBox inflated = clip({box.x_min - pad_x, box.y_min - pad_y,
                                       box.x_max + pad_x, box.y_max + pad_y},
                                      image.cols, image.rows);
    const int x0 = static_cast<int>(std::floor(inflated.x_min));
    const int y0 = static_cast<int>(std::floor(inflated.y_min));
    const int x1 = static_cast<int>(std::ceil(inflated.x_max));
    const int y1 = static_cast<int>(std::ceil(inflated.y_max));
    if (x1 - x0 <= 0 || y1 - y0 <= 0) {
        throw Error("crop: zero-area box after clipping");
    }
    return image(cv::Rect(x0, y0, x1 - x0, y1 - y0)).clone();
}

} // namespace curbsight::geometry
