#include "mmpd/conv2d.hpp"

#include "mmpd/errors.hpp"

namespace mmpd::conv {

Eigen::MatrixXd im2col3x3(const FeatureMap& in) {
    const int h = in.height, w = in.width, c = in.channels();
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h) * w, 9 * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Index row = static_cast<Eigen::Index>(y) * w + x;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = x + kx - 1;
                    if (sx < 0 || sx >= w) continue;
                    cols.block(row, (ky * 3 + kx) * c, 1, c) = in.data.row(static_cast<Eigen::Index>(sy) * w + sx);
                }
            }
        }
    }
    return cols;
}

FeatureMap col2im3x3(const Eigen::MatrixXd& cols, int height, int width, int channels) {
    FeatureMap out{height, width, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(height) * width, channels)};
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Eigen::Index row = static_cast<Eigen::Index>(y) * width + x;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = x + kx - 1;
                    if (sx < 0 || sx >= width) continue;
                    out.data.row(static_cast<Eigen::Index>(sy) * width + sx) +=
                        cols.block(row, (ky * 3 + kx) * channels, 1, channels);
                }
            }
        }
    }
    return out;
}

FeatureMap conv3x3_forward(const FeatureMap& in, const Eigen::MatrixXd& weight, const Eigen::MatrixXd& bias,
                           Eigen::MatrixXd* cols_out) {
    if (weight.rows() != 9 * in.channels())
        throw ShapeError("conv3x3: weight has " + std::to_string(weight.rows()) + " rows, expected " +
                         std::to_string(9 * in.channels()));
    Eigen::MatrixXd cols = im2col3x3(in);
    FeatureMap out{in.height, in.width, cols * weight};
    out.data.rowwise() += bias.row(0);
    if (cols_out) *cols_out = std::move(cols);
    return out;
}

FeatureMap conv3x3_backward(const Eigen::MatrixXd& cols, int height, int width, int in_channels,
                            const Eigen::MatrixXd& weight, const Eigen::MatrixXd& grad_out,
                            Eigen::MatrixXd& grad_weight, Eigen::MatrixXd& grad_bias) {
    grad_weight.noalias() += cols.transpose() * grad_out;
    grad_bias.row(0) += grad_out.colwise().sum();
    return conv3x3_input_grad(height, width, in_channels, weight, grad_out);
}

FeatureMap conv3x3_input_grad(int height, int width, int in_channels, const Eigen::MatrixXd& weight,
                              const Eigen::MatrixXd& grad_out) {
    const Eigen::MatrixXd grad_cols = grad_out * weight.transpose();
    return col2im3x3(grad_cols, height, width, in_channels);
}

FeatureMap avg_pool2_forward(const FeatureMap& in) {
    if (in.height % 2 != 0 || in.width % 2 != 0)
        throw ShapeError("avg_pool2 needs even spatial dimensions, got " + std::to_string(in.height) + "x" +
                         std::to_string(in.width));
    const int oh = in.height / 2, ow = in.width / 2;
    FeatureMap out{oh, ow, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(oh) * ow, in.channels())};
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            auto dst = out.data.row(static_cast<Eigen::Index>(y) * ow + x);
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    dst += 0.25 * in.data.row(static_cast<Eigen::Index>(2 * y + dy) * in.width + 2 * x + dx);
        }
    return out;
}

FeatureMap avg_pool2_backward(const FeatureMap& grad_out, int in_height, int in_width) {
    FeatureMap g{in_height, in_width,
                 Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(in_height) * in_width, grad_out.channels())};
    for (int y = 0; y < grad_out.height; ++y)
        for (int x = 0; x < grad_out.width; ++x) {
            const auto src = grad_out.data.row(static_cast<Eigen::Index>(y) * grad_out.width + x);
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    g.data.row(static_cast<Eigen::Index>(2 * y + dy) * in_width + 2 * x + dx) += 0.25 * src;
        }
    return g;
}

} // namespace mmpd::conv
