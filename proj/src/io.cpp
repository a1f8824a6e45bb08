#include "cosim/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cosim::io {

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string points_csv(const Points& p) {
    std::string out;
    for (Eigen::Index j = 0; j < p.cols(); ++j) out += (j ? ",x" : "x") + std::to_string(j);
    out += '\n';
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            if (j) out += ',';
            out += format_double(p(i, j));
        }
        out += '\n';
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_points_csv(const Points& p, const std::filesystem::path& path) { write_text(path, points_csv(p)); }

Points read_points_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("sample file not found: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty sample file");
    const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);

    std::vector<double> values;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Eigen::Index n = 0;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || p != cell.data() + cell.size())
                throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
            values.push_back(v);
            ++n;
        }
        if (n != cols)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                                  " columns");
    }
    Points out(static_cast<Eigen::Index>(values.size()) / cols, cols);
    std::copy(values.begin(), values.end(), out.data());
    return out;
}

std::string scatter_ppm(const Points& p, int size, double lim) {
    if (p.cols() != 2) throw ValidationError("scatter plots need 2-D points");
    if (size < 16) throw ValidationError("raster size must be >= 16");
    if (lim <= 0.0) {
        lim = p.rows() > 0 ? p.array().abs().maxCoeff() * 1.1 : 1.0;
        if (!(lim > 0.0) || !std::isfinite(lim)) lim = 1.0;
    }
    std::vector<unsigned char> px(static_cast<std::size_t>(size) * size * 3, 255);
    auto put = [&](int x, int y, unsigned char v) {
        if (x < 0 || y < 0 || x >= size || y >= size) return;
        const std::size_t k = (static_cast<std::size_t>(y) * size + x) * 3;
        px[k] = px[k + 1] = px[k + 2] = v;
    };
    const int mid = size / 2;
    for (int i = 0; i < size; ++i) {
        put(i, mid, 200);
        put(mid, i, 200);
    }
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        if (!std::isfinite(p(i, 0)) || !std::isfinite(p(i, 1))) continue;
        const int cx = static_cast<int>(std::lround((p(i, 0) / lim + 1.0) * 0.5 * (size - 1)));
        const int cy = static_cast<int>(std::lround((1.0 - p(i, 1) / lim) * 0.5 * (size - 1)));
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) put(cx + dx, cy + dy, 0);
    }
    std::string out = "P6\n" + std::to_string(size) + " " + std::to_string(size) + "\n255\n";
    out.append(reinterpret_cast<const char*>(px.data()), px.size());
    return out;
}

void write_scatter_ppm(const Points& p, const std::filesystem::path& path, int size, double lim) {
    write_text(path, scatter_ppm(p, size, lim));
}

}  // namespace cosim::io
