#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "carenet/evaluate.hpp"
#include "carenet/error.hpp"

namespace carenet {

namespace {

struct Welford {
    std::vector<double> values;
    void add(double v) { values.push_back(v); }
    double mean() const {
        double s = 0.0;
        for (double v : values) s += v;
        return values.empty() ? 0.0 : s / static_cast<double>(values.size());
    }
    // Sample standard deviation (n-1); 0 for a single value.
    double stddev() const {
        if (values.size() < 2) return 0.0;
        const double m = mean();
        double s = 0.0;
        for (double v : values) s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(values.size() - 1));
    }
};

std::string fmt(double v) {
    char buf[48];
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::vector<AggregateRow> aggregate_metrics(const std::vector<FoldMetrics>& folds) {
    // (class, metric) -> fold values; NaN (undefined) entries are skipped.
    std::vector<std::string> class_order;
    std::map<std::string, std::map<std::string, Welford>> acc;
    for (const auto& fold : folds) {
        for (const auto& cm : fold.per_class) {
            if (!acc.count(cm.class_name)) class_order.push_back(cm.class_name);
            auto& slot = acc[cm.class_name];
            slot["accuracy"].add(cm.accuracy);
            if (cm.specificity_defined) slot["specificity"].add(cm.specificity);
            if (cm.sensitivity_defined) slot["sensitivity"].add(cm.sensitivity);
        }
    }
    std::vector<AggregateRow> rows;
    for (const auto& cls : class_order) {
        for (const char* metric : {"accuracy", "specificity", "sensitivity"}) {
            AggregateRow row;
            row.class_name = cls;
            row.metric = metric;
            auto& w = acc[cls][metric];
            if (w.values.empty()) {
                row.mean = std::numeric_limits<double>::quiet_NaN();
                row.stddev = std::numeric_limits<double>::quiet_NaN();
            } else {
                row.mean = w.mean();
                row.stddev = w.stddev();
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void make_report(const TaskSchema& schema, const std::vector<FoldMetrics>& folds,
                 const std::vector<VoteRecord>& votes, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);

    if (schema.kind != TaskKind::Regression) {
        std::ofstream metrics(out_dir / "metrics.csv", std::ios::trunc);
        if (!metrics) raise(ErrorKind::Io, "cannot write metrics.csv");
        metrics << "task,class,metric,mean,std\n";
        for (const auto& row : aggregate_metrics(folds)) {
            metrics << schema.task << ',' << row.class_name << ',' << row.metric << ','
                    << fmt(row.mean) << ',' << fmt(row.stddev) << '\n';
        }
    } else {
        // Regression table in both scales; percent = fraction * (max - min).
        Welford mae, mse, rmse;
        for (const auto& fold : folds) {
            if (!fold.regression) continue;
            mae.add(fold.regression->mae);
            mse.add(fold.regression->mse);
            rmse.add(fold.regression->rmse);
        }
        const double span = schema.range_max - schema.range_min;
        std::ofstream reg(out_dir / "regression.csv", std::ios::trunc);
        if (!reg) raise(ErrorKind::Io, "cannot write regression.csv");
        reg << "scale,mae,mse,rmse,mae_std,mse_std,rmse_std\n";
        reg << "minmax," << fmt(mae.mean()) << ',' << fmt(mse.mean()) << ',' << fmt(rmse.mean())
            << ',' << fmt(mae.stddev()) << ',' << fmt(mse.stddev()) << ',' << fmt(rmse.stddev())
            << '\n';
        reg << "percent," << fmt(mae.mean() * span) << ',' << fmt(mse.mean() * span * span) << ','
            << fmt(rmse.mean() * span) << ',' << fmt(mae.stddev() * span) << ','
            << fmt(mse.stddev() * span * span) << ',' << fmt(rmse.stddev() * span) << '\n';
    }

    std::ofstream vote_csv(out_dir / "votes.csv", std::ios::trunc);
    if (!vote_csv) raise(ErrorKind::Io, "cannot write votes.csv");
    vote_csv << "patient,fold,truth,prediction,correct\n";
    for (const auto& v : votes) {
        vote_csv << v.patient_id << ',' << v.fold << ',' << v.truth << ',' << v.prediction << ','
                 << (v.correct ? 1 : 0) << '\n';
    }
}

}  // namespace carenet
