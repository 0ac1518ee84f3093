#pragma once

// 3x3 same-padded convolutions and 2x2 average pooling on HWC feature maps, with
// explicit backward passes. A feature map is stored as an (H*W) x C matrix whose
// row index is y*W + x.

#include <Eigen/Dense>

namespace mmpd::conv {

struct FeatureMap {
    int height = 0;
    int width = 0;
    Eigen::MatrixXd data;  // (height*width) x channels

    int channels() const { return static_cast<int>(data.cols()); }
};

// Unfolds 3x3 neighbourhoods into (H*W) x (9*C); column (ky*3 + kx)*C + c.
Eigen::MatrixXd im2col3x3(const FeatureMap& in);

// Folds column gradients back onto an H x W x C map (adjoint of im2col3x3).
FeatureMap col2im3x3(const Eigen::MatrixXd& cols, int height, int width, int channels);

// weight: (9*Cin) x Cout, bias: 1 x Cout.
FeatureMap conv3x3_forward(const FeatureMap& in, const Eigen::MatrixXd& weight,
                           const Eigen::MatrixXd& bias, Eigen::MatrixXd* cols_out = nullptr);

// Accumulates into grad_weight / grad_bias and returns dL/d(input).
FeatureMap conv3x3_backward(const Eigen::MatrixXd& cols, int height, int width, int in_channels,
                            const Eigen::MatrixXd& weight, const Eigen::MatrixXd& grad_out,
                            Eigen::MatrixXd& grad_weight, Eigen::MatrixXd& grad_bias);

// Same as conv3x3_backward without parameter gradients.
FeatureMap conv3x3_input_grad(int height, int width, int in_channels, const Eigen::MatrixXd& weight,
                              const Eigen::MatrixXd& grad_out);

FeatureMap avg_pool2_forward(const FeatureMap& in);
FeatureMap avg_pool2_backward(const FeatureMap& grad_out, int in_height, int in_width);

} // namespace mmpd::conv
