#include <Eigen/Dense>
#include <cmath>

#include "carenet/preprocess.hpp"

namespace carenet {

namespace {

// Interferent sub-basis for one constituent: its mean spectrum plus PCs up
// to the cumulative explained-variance threshold (zero-variance PCs dropped).
void append_constituent(const std::vector<std::vector<double>>& rows, double var_threshold,
                        const std::string& label, std::vector<std::vector<double>>* basis,
                        std::vector<std::string>* names) {
    const std::size_t c = rows[0].size();
    std::vector<double> mean(c, 0.0);
    for (const auto& row : rows)
        for (std::size_t j = 0; j < c; ++j) mean[j] += row[j];
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(rows.size());
    basis->push_back(mean);
    names->push_back(label + " mean");

    const int max_pcs = std::min<int>(static_cast<int>(rows.size()) - 1, static_cast<int>(c));
    if (max_pcs < 1) return;
    const PcaResult pca = pca_decompose(rows, max_pcs);

    double cumulative = 0.0;
    for (int a = 0; a < max_pcs; ++a) {
        if (pca.model.eigenvalues[static_cast<std::size_t>(a)] <= 1e-12) break;
        basis->push_back(pca.model.loadings[static_cast<std::size_t>(a)]);
        names->push_back(label + " PC" + std::to_string(a + 1));
        cumulative += pca.model.explained_variance_ratio[static_cast<std::size_t>(a)];
        if (cumulative >= var_threshold) break;
    }
}

Eigen::MatrixXd design_matrix(const EMSCModel& model) {
    const int c = model.axis.n_points;
    const int k_interf = static_cast<int>(model.interferent_basis.size());
    const int rows = 1 + 1 + model.order + k_interf;  // ones, reference, poly j>=1, interferents
    Eigen::MatrixXd d(c, rows);
    for (int i = 0; i < c; ++i) d(i, 0) = 1.0;
    for (int i = 0; i < c; ++i) d(i, 1) = model.reference[static_cast<std::size_t>(i)];
    for (int j = 1; j <= model.order; ++j)
        for (int i = 0; i < c; ++i)
            d(i, 1 + j) = model.poly_basis[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    for (int k = 0; k < k_interf; ++k)
        for (int i = 0; i < c; ++i)
            d(i, 2 + model.order + k) =
                model.interferent_basis[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
    return d;
}

}  // namespace

EMSCModel build_emsc_model(const ReferenceLibrary& library, const WavenumberAxis& axis,
                           int poly_order, double var_threshold) {
    require(poly_order >= 0, ErrorKind::Input, "polynomial order must be >= 0");
    require(var_threshold > 0.0 && var_threshold <= 1.0, ErrorKind::Input,
            "variance threshold must be in (0,1]");

    // Bring library rows onto the requested axis (truncating when needed).
    const auto on_axis = [&](const std::vector<double>& row) {
        if (library.axis.almost_equal(axis)) return row;
        return truncate_values(library.axis, row, axis.start + axis.spacing() * 0.5,
                               axis.end - axis.spacing() * 0.5);
    };

    EMSCModel model;
    model.axis = axis;
    model.order = poly_order;
    model.reference = on_axis(library.global_mean.values);
    require(static_cast<int>(model.reference.size()) == axis.n_points, ErrorKind::Model,
            "library axis does not cover the requested axis");

    // Polynomial rows t^j with the axis rescaled to [-1, 1]; row 0 is ones.
    const int c = axis.n_points;
    model.poly_basis.assign(static_cast<std::size_t>(poly_order + 1),
                            std::vector<double>(static_cast<std::size_t>(c)));
    for (int i = 0; i < c; ++i) {
        const double t = 2.0 * static_cast<double>(i) / static_cast<double>(c - 1) - 1.0;
        double p = 1.0;
        for (int j = 0; j <= poly_order; ++j) {
            model.poly_basis[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = p;
            p *= t;
        }
    }

    std::vector<std::vector<double>> paraffin, vapor;
    for (const auto& row : library.paraffin_spectra) paraffin.push_back(on_axis(row));
    for (const auto& row : library.vapor_spectra) vapor.push_back(on_axis(row));
    append_constituent(paraffin, var_threshold, "paraffin", &model.interferent_basis,
                       &model.interferent_names);
    append_constituent(vapor, var_threshold, "vapor", &model.interferent_basis,
                       &model.interferent_names);

    // Full-rank check with attribution: walk rows and flag the first one that
    // fails to increase the rank.
    const Eigen::MatrixXd d = design_matrix(model);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
    qr.setThreshold(1e-10);
    if (qr.rank() < d.cols()) {
        std::vector<std::string> row_names = {"constant", "reference"};
        for (int j = 1; j <= poly_order; ++j) row_names.push_back("poly^" + std::to_string(j));
        for (const auto& n : model.interferent_names) row_names.push_back(n);
        std::string collinear;
        for (int cols = 1; cols <= d.cols(); ++cols) {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> partial(d.leftCols(cols));
            partial.setThreshold(1e-10);
            if (partial.rank() < cols) {
                collinear = row_names[static_cast<std::size_t>(cols - 1)];
                break;
            }
        }
        raise(ErrorKind::Model, "EMSC design matrix is rank deficient (collinear row: " +
                                    collinear + ")");
    }
    return model;
}

struct EMSCSolver::Impl {
    Eigen::MatrixXd design;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
};

EMSCSolver::EMSCSolver(EMSCModel model) : model_(std::move(model)) {
    auto impl = std::make_shared<Impl>();
    impl->design = design_matrix(model_);
    impl->qr.compute(impl->design);
    impl_ = std::move(impl);
}

EMSCResult EMSCSolver::correct(const std::vector<double>& values) const {
    const int c = model_.axis.n_points;
    require(static_cast<int>(values.size()) == c, ErrorKind::Input,
            "spectrum length does not match EMSC model axis");
    Eigen::VectorXd x(c);
    for (int i = 0; i < c; ++i) x(i) = values[static_cast<std::size_t>(i)];

    const Eigen::VectorXd coeffs = impl_->qr.solve(x);

    EMSCCoefficients out;
    out.a = coeffs(0);
    out.b = coeffs(1);
    out.poly.resize(static_cast<std::size_t>(model_.order));
    for (int j = 0; j < model_.order; ++j) out.poly[static_cast<std::size_t>(j)] = coeffs(2 + j);
    const int k_interf = static_cast<int>(model_.interferent_basis.size());
    out.interferents.resize(static_cast<std::size_t>(k_interf));
    for (int k = 0; k < k_interf; ++k)
        out.interferents[static_cast<std::size_t>(k)] = coeffs(2 + model_.order + k);

    if (std::abs(out.b) < 1e-6)
        raise(ErrorKind::Correction,
              "multiplicative coefficient below 1e-6; spectrum has no resemblance to reference");

    // corrected = (x - a - sum_j d_j poly_j - sum_k c_k interferent_k) / b
    Eigen::VectorXd stripped = x;
    stripped.array() -= out.a;
    for (int j = 1; j <= model_.order; ++j)
        for (int i = 0; i < c; ++i)
            stripped(i) -= coeffs(1 + j) *
                           model_.poly_basis[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    for (int k = 0; k < k_interf; ++k)
        for (int i = 0; i < c; ++i)
            stripped(i) -= out.interferents[static_cast<std::size_t>(k)] *
                           model_.interferent_basis[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
    stripped /= out.b;

    EMSCResult result;
    result.corrected.axis = model_.axis;
    result.corrected.values.assign(stripped.data(), stripped.data() + c);
    double rss = 0.0;
    for (int i = 0; i < c; ++i) {
        const double r = result.corrected.values[static_cast<std::size_t>(i)] -
                         model_.reference[static_cast<std::size_t>(i)];
        rss += r * r;
    }
    result.coeffs = std::move(out);
    result.coeffs.residual_norm = std::sqrt(rss);
    return result;
}

EMSCResult emsc_correct(const EMSCModel& model, const Spectrum& spectrum) {
    require(spectrum.axis.almost_equal(model.axis), ErrorKind::Input,
            "spectrum is not on the EMSC model axis");
    return EMSCSolver(model).correct(spectrum.values);
}

Spectrum minmax_normalize(const Spectrum& spectrum) {
    Spectrum out;
    out.axis = spectrum.axis;
    out.values = minmax_normalize(spectrum.values);
    return out;
}

std::vector<double> minmax_normalize(const std::vector<double>& values) {
    require(!values.empty(), ErrorKind::Input, "empty spectrum");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo))
        raise(ErrorKind::Normalization, "constant spectrum cannot be min-max normalized");
    std::vector<double> out(values.size());
    const double span = hi - lo;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / span;
    return out;
}

}  // namespace carenet
