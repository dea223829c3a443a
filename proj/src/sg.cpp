#include "sglab/sg.hpp"

#include <cmath>

#include "sglab/errors.hpp"

namespace sglab {

namespace {

void check_pair(const Matrix& h, const Matrix& y) {
    if (h.rows() != y.rows()) {
        throw ShapeError("sg inputs need matching batch sizes, got h " + shape_str(h) + " and y " +
                         shape_str(y));
    }
}

Matrix broadcast_row(const Matrix& row, std::size_t n) {
    Matrix out(n, row.cols());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < row.cols(); ++j) out(i, j) = row(0, j);
    }
    return out;
}

Matrix sigmoid_of(const Matrix& u) {
    Matrix out(u.rows(), u.cols());
    for (std::size_t i = 0; i < u.size(); ++i) {
        double x = u.data()[i];
        out.data()[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return out;
}

} // namespace

SGKind sg_kind_from_string(const std::string& s) {
    if (s == "linear") return SGKind::linear;
    if (s == "sigmoid") return SGKind::sigmoid;
    if (s == "activation_only") return SGKind::activation_only;
    if (s == "label_only") return SGKind::label_only;
    if (s == "constant") return SGKind::constant;
    throw ValueError("unknown sg kind '" + s + "'");
}

std::string to_string(SGKind k) {
    switch (k) {
    case SGKind::linear: return "linear";
    case SGKind::sigmoid: return "sigmoid";
    case SGKind::activation_only: return "activation_only";
    case SGKind::label_only: return "label_only";
    case SGKind::constant: return "constant";
    }
    throw ValueError("invalid sg kind");
}

SGModule make_sg(SGKind kind, std::size_t dh, std::size_t dy, const AdamConfig& opt) {
    if (dh == 0) throw ValueError("sg needs a positive activation width");
    switch (kind) {
    case SGKind::linear:
        return LinearSG{{Matrix(dh, dh), {}}, {Matrix(dy, dh), {}}, {Matrix(1, dh), {}}, opt};
    case SGKind::sigmoid:
        return SigmoidSG{{Matrix(1, dh), {}},
                         {Matrix(dh, dh), {}},
                         {Matrix(dy, dh), {}},
                         {Matrix(1, dh), {}},
                         opt};
    case SGKind::activation_only:
        return AblatedSG{AblationKind::activation_only,
                         {Matrix(dh, dh), {}},
                         {},
                         {Matrix(1, dh), {}},
                         opt};
    case SGKind::label_only:
        return AblatedSG{AblationKind::label_only, {}, {Matrix(dy, dh), {}}, {Matrix(1, dh), {}}, opt};
    case SGKind::constant: return ConstantSG{{Matrix(1, dh), {}}, opt};
    }
    throw ValueError("invalid sg kind");
}

std::size_t sg_dim(const SGModule& sg) {
    return std::visit(
        [](const auto& m) -> std::size_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ConstantSG>) return m.c.value.cols();
            else return m.C.value.cols();
        },
        sg);
}

Matrix sg_forward(const SGModule& sg, const Matrix& h, const Matrix& y) {
    check_pair(h, y);
    const std::size_t dh = sg_dim(sg);
    if (h.cols() != dh) {
        throw ShapeError("sg expects activations of width " + std::to_string(dh) + ", got " +
                         shape_str(h));
    }
    return std::visit(
        [&](const auto& m) -> Matrix {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LinearSG>) {
                Matrix s = matmul(h, m.A.value);
                add_in_place(s, matmul(y, m.B.value));
                add_row_in_place(s, m.C.value);
                return s;
            } else if constexpr (std::is_same_v<T, SigmoidSG>) {
                Matrix s = sigmoid_of(matmul(h, m.A.value));
                for (std::size_t i = 0; i < s.rows(); ++i) {
                    for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) *= m.d.value(0, j);
                }
                add_in_place(s, matmul(y, m.B.value));
                add_row_in_place(s, m.C.value);
                return s;
            } else if constexpr (std::is_same_v<T, AblatedSG>) {
                Matrix s = m.kind == AblationKind::activation_only ? matmul(h, m.A.value)
                                                                   : matmul(y, m.B.value);
                add_row_in_place(s, m.C.value);
                return s;
            } else { // ConstantSG
                return broadcast_row(m.c.value, h.rows());
            }
        },
        sg);
}

Matrix sg_backward_input(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& g) {
    check_pair(h, y);
    if (g.rows() != h.rows() || g.cols() != sg_dim(sg)) {
        throw ShapeError("sg upstream gradient has shape " + shape_str(g));
    }
    return std::visit(
        [&](const auto& m) -> Matrix {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LinearSG>) {
                return matmul(g, transpose(m.A.value));
            } else if constexpr (std::is_same_v<T, SigmoidSG>) {
                Matrix su = sigmoid_of(matmul(h, m.A.value));
                Matrix gu = hadamard(g, broadcast_row(m.d.value, h.rows()));
                for (std::size_t i = 0; i < su.size(); ++i) {
                    gu.data()[i] *= su.data()[i] * (1.0 - su.data()[i]);
                }
                return matmul(gu, transpose(m.A.value));
            } else if constexpr (std::is_same_v<T, AblatedSG>) {
                if (m.kind == AblationKind::activation_only) return matmul(g, transpose(m.A.value));
                return Matrix(h.rows(), h.cols());
            } else { // ConstantSG
                return Matrix(h.rows(), h.cols());
            }
        },
        sg);
}

namespace {

// Shared core: prediction, mean fit loss, and d loss / d prediction.
struct FitEval {
    Matrix s;
    Matrix g; // (s - target) / n
    double loss;
};

FitEval eval_fit(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target) {
    FitEval ev{sg_forward(sg, h, y), {}, 0.0};
    if (!ev.s.same_shape(target)) {
        throw ShapeError("sg target has shape " + shape_str(target) + ", expected " +
                         shape_str(ev.s));
    }
    Matrix diff = sub(ev.s, target);
    const double n = static_cast<double>(h.rows());
    ev.loss = 0.5 * sum_sq(diff) / n;
    scale_in_place(diff, 1.0 / n);
    ev.g = std::move(diff);
    return ev;
}

} // namespace

double sg_fit_loss(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target) {
    return eval_fit(sg, h, y, target).loss;
}

SGGrads sg_param_grads(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target) {
    FitEval ev = eval_fit(sg, h, y, target);
    const Matrix& g = ev.g;
    return std::visit(
        [&](const auto& m) -> SGGrads {
            using T = std::decay_t<decltype(m)>;
            SGGrads out;
            if constexpr (std::is_same_v<T, LinearSG>) {
                out.dA = matmul(transpose(h), g);
                out.dB = matmul(transpose(y), g);
                out.dC = col_sums(g);
            } else if constexpr (std::is_same_v<T, SigmoidSG>) {
                Matrix su = sigmoid_of(matmul(h, m.A.value));
                out.dd = col_sums(hadamard(g, su));
                Matrix gu = hadamard(g, broadcast_row(m.d.value, h.rows()));
                for (std::size_t i = 0; i < su.size(); ++i) {
                    gu.data()[i] *= su.data()[i] * (1.0 - su.data()[i]);
                }
                out.dA = matmul(transpose(h), gu);
                out.dB = matmul(transpose(y), g);
                out.dC = col_sums(g);
            } else if constexpr (std::is_same_v<T, AblatedSG>) {
                if (m.kind == AblationKind::activation_only) out.dA = matmul(transpose(h), g);
                else out.dB = matmul(transpose(y), g);
                out.dC = col_sums(g);
            } else { // ConstantSG
                out.dC = col_sums(g);
            }
            return out;
        },
        sg);
}

double sg_train_step(SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target) {
    check_finite(target, "sg target");
    FitEval ev = eval_fit(sg, h, y, target);
    SGGrads grads = sg_param_grads(sg, h, y, target);
    std::visit(
        [&](auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LinearSG>) {
                adam_step(m.A.state, m.A.value, grads.dA, m.opt, "sg.A");
                adam_step(m.B.state, m.B.value, grads.dB, m.opt, "sg.B");
                adam_step(m.C.state, m.C.value, grads.dC, m.opt, "sg.C");
            } else if constexpr (std::is_same_v<T, SigmoidSG>) {
                adam_step(m.d.state, m.d.value, grads.dd, m.opt, "sg.d");
                adam_step(m.A.state, m.A.value, grads.dA, m.opt, "sg.A");
                adam_step(m.B.state, m.B.value, grads.dB, m.opt, "sg.B");
                adam_step(m.C.state, m.C.value, grads.dC, m.opt, "sg.C");
            } else if constexpr (std::is_same_v<T, AblatedSG>) {
                if (m.kind == AblationKind::activation_only)
                    adam_step(m.A.state, m.A.value, grads.dA, m.opt, "sg.A");
                else adam_step(m.B.state, m.B.value, grads.dB, m.opt, "sg.B");
                adam_step(m.C.state, m.C.value, grads.dC, m.opt, "sg.C");
            } else { // ConstantSG
                adam_step(m.c.state, m.c.value, grads.dC, m.opt, "sg.c");
            }
        },
        sg);
    return ev.loss;
}

Matrix sg_input_grad(const SGModule& sg, const Matrix& h, const Matrix& y, const Matrix& target) {
    FitEval ev = eval_fit(sg, h, y, target);
    return sg_backward_input(sg, h, y, ev.g);
}

// ---------------------------------------------------------------------------

GradientMethod::Flags GradientMethod::flags() const {
    using V = Variant;
    switch (variant) {
    case V::sg: return {false, false, false};
    case V::sgprop: return {true, true, false};
    case V::backprop: return {true, true, false};
    case V::dfa: return {true, false, true};
    case V::fa: return {true, true, false};
    case V::kickback: return {true, false, true};
    }
    throw ValueError("invalid gradient method");
}

GradientMethod::Variant variant_from_string(const std::string& s) {
    using V = GradientMethod::Variant;
    if (s == "backprop") return V::backprop;
    if (s == "sg") return V::sg;
    if (s == "sgprop") return V::sgprop;
    if (s == "fa") return V::fa;
    if (s == "dfa") return V::dfa;
    if (s == "kickback") return V::kickback;
    throw ValueError("unknown gradient method '" + s + "'");
}

std::string to_string(GradientMethod::Variant v) {
    using V = GradientMethod::Variant;
    switch (v) {
    case V::backprop: return "backprop";
    case V::sg: return "sg";
    case V::sgprop: return "sgprop";
    case V::fa: return "fa";
    case V::dfa: return "dfa";
    case V::kickback: return "kickback";
    }
    throw ValueError("invalid gradient method");
}

namespace {

const Matrix& require(const Matrix* m, const char* what, const char* variant) {
    if (m == nullptr) {
        throw ValueError(std::string(variant) + " needs " + what + " in the conspiring inputs");
    }
    return *m;
}

const SGModule& require_sg(const ConspiringInputs& in, const char* variant) {
    if (in.sg == nullptr) {
        throw ValueError(std::string(variant) + " needs an sg module in the conspiring inputs");
    }
    return *in.sg;
}

const Matrix& fixed_for(const GradientMethod& method, const ConspiringInputs& in,
                        const char* variant) {
    if (in.boundary >= method.fixed.size()) {
        throw ValueError(std::string(variant) + " needs a fixed matrix for boundary " +
                         std::to_string(in.boundary));
    }
    return method.fixed[in.boundary];
}

} // namespace

Matrix conspiring_signal(const GradientMethod& method, const Matrix& h, const Matrix& y,
                         const ConspiringInputs& in) {
    using V = GradientMethod::Variant;
    switch (method.variant) {
    case V::backprop: return require(in.dl_dh, "dl_dh", "backprop");
    case V::sg: return sg_forward(require_sg(in, "sg"), h, y);
    case V::sgprop: {
        const SGModule& sg = require_sg(in, "sgprop");
        const Matrix& t = require(in.sg_target, "sg_target", "sgprop");
        // signal = s(h,y) + alpha * d/dh ||t - s(h,y)||^2 (total sum over the batch)
        Matrix s = sg_forward(sg, h, y);
        Matrix dfit = sg_backward_input(sg, h, y, scale(sub(s, t), 2.0));
        scale_in_place(dfit, method.alpha);
        add_in_place(s, dfit);
        return s;
    }
    case V::fa: {
        const Matrix& g = require(in.dl_dg, "dl_dg", "fa");
        return matmul(g, transpose(fixed_for(method, in, "fa")));
    }
    case V::dfa: {
        const Matrix& e = require(in.dl_dp, "dl_dp", "dfa");
        return matmul(e, transpose(fixed_for(method, in, "dfa")));
    }
    case V::kickback: {
        const Matrix& e = require(in.dl_dp, "dl_dp", "kickback");
        return matmul(e, transpose(ones(h.cols(), e.cols())));
    }
    }
    throw ValueError("invalid gradient method");
}

Matrix conspiring_parameterization(const GradientMethod& method, const Matrix& h, const Matrix& y,
                                   const ConspiringInputs& in) {
    using V = GradientMethod::Variant;
    switch (method.variant) {
    case V::backprop: return h;
    case V::sg:
    case V::sgprop: return sg_forward(require_sg(in, "sg"), h, y);
    case V::fa: return matmul(h, fixed_for(method, in, "fa"));
    case V::dfa: return matmul(h, fixed_for(method, in, "dfa"));
    case V::kickback: {
        const Matrix& e = require(in.dl_dp, "dl_dp", "kickback");
        return matmul(h, ones(h.cols(), e.cols()));
    }
    }
    throw ValueError("invalid gradient method");
}

Matrix conspiring_target(const GradientMethod& method, const ConspiringInputs& in) {
    using V = GradientMethod::Variant;
    switch (method.variant) {
    case V::backprop: return scale(require(in.dl_dh, "dl_dh", "backprop"), -1.0);
    case V::sg:
    case V::sgprop: return require(in.dl_dh, "dl_dh", to_string(method.variant).c_str());
    case V::fa: return scale(require(in.dl_dg, "dl_dg", "fa"), -1.0);
    case V::dfa: return scale(require(in.dl_dp, "dl_dp", "dfa"), -1.0);
    case V::kickback: return scale(require(in.dl_dp, "dl_dp", "kickback"), -1.0);
    }
    throw ValueError("invalid gradient method");
}

double conspiring_sg_loss(const GradientMethod& method, const Matrix& t, const Matrix& s) {
    if (!t.same_shape(s)) {
        throw ShapeError("conspiring loss needs matching shapes, got " + shape_str(t) + " and " +
                         shape_str(s));
    }
    using V = GradientMethod::Variant;
    if (method.variant == V::sg || method.variant == V::sgprop) return sum_sq(sub(t, s));
    return -dot(t, s);
}

} // namespace sglab
