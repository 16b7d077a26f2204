#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

namespace curbsight::geometry {

// Axis-aligned box in some named pixel space. Coordinates are continuous;
// the containing image's pixel (i, j) spans [i, i+1) x [j, j+1).
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    bool valid() const { return x_min < x_max && y_min < y_max; }
};

// Clip to [0,w] x [0,h].
BoundingBox clip(const BoundingBox& box, double w, double h);

// Pinhole view carved out of the sphere. yaw 0 looks along +z (the panorama
// center column), yaw 90 along +x; positive pitch looks up. fov is the
// horizontal field of view; the vertical one follows from the aspect ratio.
struct PerspectiveView {
    std::string view_id;
    double yaw_deg = 0.0;
    double pitch_deg = 0.0;
    double fov_deg = 90.0;
    int width = 0;
    int height = 0;
};

// Full-sphere equirectangular panorama; longitude on x, latitude on y.
struct EquirectImage {
    std::string image_id;
    cv::Mat pixels; // 8UC1 or 8UC3

    int width() const { return pixels.cols; }
    int height() const { return pixels.rows; }
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
    double norm() const;
};

// The default split: 4 non-overlapping quadrant views, fov 90, 2048x2048.
std::vector<PerspectiveView> default_views(int size = 2048);

// Continuous view pixel -> unit direction on the sphere. (px, py) must lie
// in [0, w] x [0, h]; the optical axis passes through (w/2, h/2).
Vec3 view_pixel_to_direction(const PerspectiveView& view, double px, double py);

// Unit direction -> continuous panorama pixel in [0, width) x [0, height).
// Throws on a zero (or far-from-unit) vector.
std::array<double, 2> direction_to_pano_pixel(const Vec3& dir, int pano_w, int pano_h);

// Continuous panorama pixel -> unit direction. x wraps; y is clamped to the
// poles. Inverse of direction_to_pano_pixel away from the poles.
Vec3 pano_pixel_to_direction(double px, double py, int pano_w, int pano_h);

// Unit direction -> continuous view pixel. nullopt when the direction lies
// behind the camera plane. The result may fall outside the view bounds.
std::optional<std::array<double, 2>> direction_to_view_pixel(const PerspectiveView& view,
                                                             const Vec3& dir);

// Panorama-space hull of a view-space box. When the hull straddles the
// longitude seam the returned box keeps x_min > x_max (x_max already
// wrapped) and wraps_seam is set.
struct PanoBox {
    BoundingBox box;
    bool wraps_seam = false;
};

PanoBox view_bbox_to_pano(const PerspectiveView& view, const BoundingBox& box,
                          int pano_w, int pano_h);

// View-space hull of a panorama-space box (seam-aware); nullopt when no
// boundary sample projects in front of the camera.
std::optional<BoundingBox> pano_box_to_view(const PerspectiveView& view, const PanoBox& pano_box,
                                            int pano_w, int pano_h);

// Render one perspective view by bilinear sampling along pinhole rays.
cv::Mat render_view(const EquirectImage& pano, const PerspectiveView& view);

// Render every view. Throws if the panorama is not 2:1 or a view is degenerate.
std::vector<std::pair<std::string, cv::Mat>> split_panorama(
    const EquirectImage& pano, const std::vector<PerspectiveView>& views);

// Sub-image of box inflated by pad_fraction per side, clipped to the image.
// Throws when the clipped box has no pixels.
cv::Mat crop(const cv::Mat& image, const BoundingBox& box, double pad_fraction);

} // namespace curbsight::geometry
