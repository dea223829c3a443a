#pragma once

#include <string>
#include <variant>
#include <vector>

#include "sglab/matrix.hpp"
#include "sglab/network.hpp"

namespace sglab {

// A trainable tensor bundled with its optimizer state.
struct SGParam {
    Matrix value;
    AdamState state;
};

// SG(h, y) = hA + yB + C. Everything starts at zero, so the initial
// prediction is exactly zero and the first update below the module is a no-op.
struct LinearSG {
    SGParam A; // [dh, dh]
    SGParam B; // [dy, dh]
    SGParam C; // [1, dh]
    AdamConfig opt;
};

// SG(h, y) = d ⊙ σ(hA) + yB + C. d is a trainable per-unit scale; zeroing d
// (rather than A) is what preserves the zero-output start here.
struct SigmoidSG {
    SGParam d; // [1, dh]
    SGParam A; // [dh, dh]
    SGParam B; // [dy, dh]
    SGParam C; // [1, dh]
    AdamConfig opt;
};

enum class AblationKind { activation_only, label_only };

// LinearSG with one input severed: activation_only drops yB, label_only
// drops hA. The severed input provably cannot reach the output.
struct AblatedSG {
    AblationKind kind = AblationKind::activation_only;
    SGParam A; // empty for label_only
    SGParam B; // empty for activation_only
    SGParam C;
    AdamConfig opt;
};

// Input-independent prediction: one trainable value per unit.
struct ConstantSG {
    SGParam c; // [1, dh]
    AdamConfig opt;
};

using SGModule = std::variant<LinearSG, SigmoidSG, AblatedSG, ConstantSG>;

enum class SGKind { linear, sigmoid, activation_only, label_only, constant };
SGKind sg_kind_from_string(const std::string& s);
std::string to_string(SGKind k);

SGModule make_sg(SGKind kind, std::size_t dh, std::size_t dy, const AdamConfig& opt);

std::size_t sg_dim(const SGModule& sg); // dh

// Predicted dL/dh, shape [n, dh].
Matrix sg_forward(const SGModule& sg, const Matrix& h, const Matrix& y);

// Chains an arbitrary upstream gradient on the prediction back to h.
Matrix sg_backward_input(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& g);

// L_SG = (1/n) sum_i 0.5 ||s_i - t_i||^2, target held constant.
double sg_fit_loss(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target);

struct SGGrads {
    Matrix dA, dB, dC, dd; // empty where the module has no such parameter
};
SGGrads sg_param_grads(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target);

// One Adam step on the module's parameters against the fit loss; returns the
// pre-step L_SG. Throws NumericError on a non-finite target.
double sg_train_step(SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target);

// d L_SG / dh under the same batch-mean convention (the term that flows into
// the producing segment in prop mode).
Matrix sg_input_grad(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target);

// ---------------------------------------------------------------------------
// Unified view: backprop, SG, SG+prop, FA, DFA, and Kickback all described as
// "fit a predictor s(h,y) to a target t and deliver a signal at h".

struct GradientMethod {
    enum class Variant { backprop, sg, sgprop, fa, dfa, kickback };
    Variant variant = Variant::backprop;
    double alpha = 1.0;        // sgprop mixing factor
    std::vector<Matrix> fixed; // frozen random matrices for fa/dfa, per boundary

    struct Flags {
        bool update_locked;
        bool backward_locked;
        bool direct_error;
    };
    Flags flags() const;
};

GradientMethod::Variant variant_from_string(const std::string& s);
std::string to_string(GradientMethod::Variant v);

// Whatever true gradients the chosen variant consumes, plus the module for
// sg/sgprop. Missing required entries raise ValueError.
struct ConspiringInputs {
    const Matrix* dl_dh = nullptr;     // backprop
    const Matrix* dl_dp = nullptr;     // dfa, kickback (output-layer gradient)
    const Matrix* dl_dg = nullptr;     // fa (next dense layer's output gradient)
    const SGModule* sg = nullptr;      // sg, sgprop
    const Matrix* sg_target = nullptr; // sgprop's prop term
    std::size_t boundary = 0;          // index into method.fixed
};

// The learning signal delivered at h.
Matrix conspiring_signal(const GradientMethod& method, const Matrix& h, const Matrix& y,
                         const ConspiringInputs& in);
// The predictor s(h, y) the variant implicitly uses.
Matrix conspiring_parameterization(const GradientMethod& method, const Matrix& h, const Matrix& y,
                                   const ConspiringInputs& in);
// The target t the predictor is fitted against.
Matrix conspiring_target(const GradientMethod& method, const ConspiringInputs& in);
// ||t - s||^2 for sg/sgprop; -<t, s> for the others.
double conspiring_sg_loss(const GradientMethod& method, const Matrix& t, const Matrix& s);

} // namespace sglab
