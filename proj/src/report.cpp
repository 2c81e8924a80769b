#include "anonreid/report.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <Eigen/Dense>

#include <fstream>
#include <sstream>

using json = nlohmann::json;

namespace anonreid {

namespace {

struct Canvas {
    cv::Mat img;
    int margin = 48;
    Canvas(int w, int h) : img(h, w, CV_8UC3, cv::Scalar(255, 255, 255)) {}

    cv::Point map(real x, real y, real x0, real x1, real y0, real y1) const {
        const int W = img.cols - 2 * margin, H = img.rows - 2 * margin;
        const real fx = x1 > x0 ? (x - x0) / (x1 - x0) : 0.5;
        const real fy = y1 > y0 ? (y - y0) / (y1 - y0) : 0.5;
        return {margin + static_cast<int>(fx * W), img.rows - margin - static_cast<int>(fy * H)};
    }
    void axes(const std::string& xlabel, const std::string& ylabel) {
        cv::line(img, {margin, margin}, {margin, img.rows - margin}, {0, 0, 0});
        cv::line(img, {margin, img.rows - margin}, {img.cols - margin, img.rows - margin}, {0, 0, 0});
        cv::putText(img, xlabel, {img.cols / 2 - 30, img.rows - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                    {0, 0, 0});
        cv::putText(img, ylabel, {6, margin - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0});
    }
};

cv::Scalar palette(int i) {
    static const cv::Scalar colors[] = {{200, 60, 60}, {60, 160, 60}, {60, 60, 200}, {30, 150, 200},
                                        {180, 60, 180}, {60, 180, 180}, {120, 120, 40}, {0, 90, 160},
                                        {160, 0, 90},  {90, 160, 0}};
    return colors[i % 10];
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void render_loss_curves(const std::string& loss_log_csv, const std::string& out_png) {
    auto rows = read_csv(loss_log_csv);
    if (rows.size() < 2) throw std::runtime_error("loss log is empty: " + loss_log_csv);
    const auto& header = rows[0];
    std::vector<std::string> want{"l1_ano", "l1_rec", "reid_total", "grand_total"};
    std::vector<int> cols;
    for (const auto& w : want)
        for (size_t c = 0; c < header.size(); ++c)
            if (header[c] == w) cols.push_back(static_cast<int>(c));
    Canvas cv_(900, 540);
    real ymax = 1e-9;
    for (size_t r = 1; r < rows.size(); ++r)
        for (int c : cols) ymax = std::max(ymax, std::stod(rows[r][c]));
    cv_.axes("step", "loss");
    const real n = static_cast<real>(rows.size() - 1);
    for (size_t k = 0; k < cols.size(); ++k) {
        for (size_t r = 2; r < rows.size(); ++r) {
            cv::line(cv_.img,
                     cv_.map(static_cast<real>(r - 1), std::stod(rows[r - 1][cols[k]]), 0, n, 0, ymax),
                     cv_.map(static_cast<real>(r), std::stod(rows[r][cols[k]]), 0, n, 0, ymax),
                     palette(static_cast<int>(k)), 1, cv::LINE_AA);
        }
        cv::putText(cv_.img, want[k], {700, 30 + 20 * static_cast<int>(k)},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, palette(static_cast<int>(k)));
    }
    if (!cv::imwrite(out_png, cv_.img)) throw std::runtime_error("cannot write " + out_png);
}

void render_cmc_curves(const std::array<EvalReport, 4>& reports,
                       const std::array<std::string, 4>& names, const std::string& out_png) {
    Canvas cv_(720, 480);
    cv_.axes("rank k", "accuracy");
    for (size_t i = 0; i < reports.size(); ++i) {
        std::vector<std::pair<real, real>> pts;
        for (const auto& [k, acc] : reports[i].rank_k) pts.push_back({static_cast<real>(k), acc});
        for (size_t p = 1; p < pts.size(); ++p)
            cv::line(cv_.img, cv_.map(pts[p - 1].first, pts[p - 1].second, 1, 10, 0, 1),
                     cv_.map(pts[p].first, pts[p].second, 1, 10, 0, 1), palette(static_cast<int>(i)),
                     2, cv::LINE_AA);
        for (auto& [x, y] : pts)
            cv::circle(cv_.img, cv_.map(x, y, 1, 10, 0, 1), 3, palette(static_cast<int>(i)), -1);
        cv::putText(cv_.img, names[i], {560, 30 + 20 * static_cast<int>(i)},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, palette(static_cast<int>(i)));
    }
    if (!cv::imwrite(out_png, cv_.img)) throw std::runtime_error("cannot write " + out_png);
}

void render_embedding_scatter(const std::string& embeddings_csv, const std::string& out_png) {
    auto rows = read_csv(embeddings_csv);
    if (rows.size() < 3) throw std::runtime_error("embedding table too small: " + embeddings_csv);
    const int D = static_cast<int>(rows[0].size()) - 4;
    const int N = static_cast<int>(rows.size()) - 1;
    Eigen::MatrixXd F(N, D);
    std::vector<int> pid(N);
    std::vector<bool> prot(N);
    for (int i = 0; i < N; ++i) {
        pid[i] = std::stoi(rows[i + 1][1]);
        prot[i] = rows[i + 1][3] == "protected";
        for (int d = 0; d < D; ++d) F(i, d) = std::stod(rows[i + 1][4 + d]);
    }
    // 2-component PCA
    Eigen::RowVectorXd mean = F.colwise().mean();
    Eigen::MatrixXd X = F.rowwise() - mean;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
    Eigen::MatrixXd Y = X * svd.matrixV().leftCols(2);
    const real x0 = Y.col(0).minCoeff(), x1 = Y.col(0).maxCoeff();
    const real y0 = Y.col(1).minCoeff(), y1 = Y.col(1).maxCoeff();
    Canvas cv_(720, 720);
    cv_.axes("pc1", "pc2");
    for (int i = 0; i < N; ++i) {
        const cv::Point p = cv_.map(Y(i, 0), Y(i, 1), x0, x1, y0, y1);
        if (prot[i]) cv::drawMarker(cv_.img, p, palette(pid[i]), cv::MARKER_CROSS, 8, 1);
        else cv::circle(cv_.img, p, 3, palette(pid[i]), -1);
    }
    cv::putText(cv_.img, "circle = raw, cross = protected", {cv_.margin, 24},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0});
    if (!cv::imwrite(out_png, cv_.img)) throw std::runtime_error("cannot write " + out_png);
}

void write_settings_csv(const std::array<EvalReport, 4>& reports,
                        const std::array<std::string, 4>& names, const std::string& out_csv) {
    std::ofstream os(out_csv, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + out_csv);
    os << "setting," << reports[0].to_csv_header() << "\n";
    for (size_t i = 0; i < reports.size(); ++i)
        os << names[i] << "," << reports[i].to_csv_row() << "\n";
}

void write_settings_json(const std::array<EvalReport, 4>& reports,
                         const std::array<std::string, 4>& names, const std::string& out_json) {
    json j = json::object();
    for (size_t i = 0; i < reports.size(); ++i) j[names[i]] = json::parse(reports[i].to_json());
    std::ofstream os(out_json, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + out_json);
    os << j.dump(2) << "\n";
}

std::array<EvalReport, 4> read_settings_json(const std::string& path,
                                             std::array<std::string, 4>& names) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    json j = json::parse(is);
    std::array<EvalReport, 4> out;
    size_t i = 0;
    for (auto& [name, v] : j.items()) {
        if (i >= 4) break;
        names[i] = name;
        EvalReport r;
        r.rank_k[1] = v.at("rank1").get<real>() / 100;
        r.rank_k[5] = v.at("rank5").get<real>() / 100;
        r.rank_k[10] = v.at("rank10").get<real>() / 100;
        r.mAP = v.at("mAP").get<real>() / 100;
        r.mINP = v.at("mINP").get<real>() / 100;
        const std::string ps = v.at("psnr").get<std::string>();
        r.psnr_db = ps == "inf" ? std::numeric_limits<real>::infinity() : std::stod(ps);
        r.ssim_val = v.at("ssim").get<real>();
        out[i++] = r;
    }
    return out;
}

}  // namespace anonreid
