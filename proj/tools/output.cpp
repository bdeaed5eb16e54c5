#include "output.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lab {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

std::string sha256_hex(const std::string& bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < len; ++k) {
        out.push_back(hex[md[k] >> 4]);
        out.push_back(hex[md[k] & 15]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string grid_csv(const qbsde::Grid& grid, const std::vector<NamedField>& fields) {
    std::string s = "t,x";
    for (const auto& f : fields) {
        const std::size_t m = f.field->components();
        for (std::size_t c = 0; c < m; ++c) s += "," + (m == 1 ? f.name : f.name + "_" + std::to_string(c));
    }
    s += '\n';
    for (std::size_t i = 0; i < grid.time.nodes(); ++i) {
        const std::string t = fmt(grid.time.time(i));
        for (std::size_t j = 0; j < grid.space.nodes(); ++j) {
            s += t;
            s += ',';
            s += fmt(grid.space.x(j));
            for (const auto& f : fields) {
                for (std::size_t c = 0; c < f.field->components(); ++c) {
                    s += ',';
                    s += fmt((*f.field)(i, j, c));
                }
            }
            s += '\n';
        }
    }
    return s;
}

std::string table_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    std::string s;
    for (std::size_t k = 0; k < header.size(); ++k) s += (k ? "," : "") + header[k];
    s += '\n';
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < r.size(); ++k) s += (k ? "," : "") + fmt(r[k]);
        s += '\n';
    }
    return s;
}

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

std::string num(double v) {
    std::ostringstream o;
    o.precision(4);
    o << v;
    return o.str();
}

}  // namespace

std::string svg_plot(const PlotSpec& spec, const std::vector<Series>& series) {
    constexpr double W = 640, H = 440, L = 70, R = 20, T = 40, B = 60;
    const auto tx = [&](double v) { return spec.log_x ? std::log10(v) : v; };
    const auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
    const auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!spec.log_x || x > 0) && (!spec.log_y || y > 0);
    };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (!usable(s.x[k], s.y[k])) continue;
            x0 = std::min(x0, tx(s.x[k]));
            x1 = std::max(x1, tx(s.x[k]));
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    const auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(spec.title) << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
        const double gx = L + (W - L - R) * k / 4.0, gy = H - B - (H - T - B) * k / 4.0;
        o << "<text x=\"" << gx << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
          << num(spec.log_x ? std::pow(10.0, fx) : fx) << "</text>\n";
        o << "<text x=\"" << L - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">"
          << num(spec.log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    }
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << escape(spec.x_label)
      << "</text>\n";
    o << "<text transform=\"translate(16," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(spec.y_label) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % std::size(colors)];
        const Series& sr = series[s];
        if (sr.markers) {
            for (std::size_t k = 0; k < sr.x.size(); ++k) {
                if (!usable(sr.x[k], sr.y[k])) continue;
                o << "<circle cx=\"" << px(sr.x[k]) << "\" cy=\"" << py(sr.y[k]) << "\" r=\"3.5\" fill=\"" << color
                  << "\"/>\n";
            }
        } else {
            o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t k = 0; k < sr.x.size(); ++k) {
                if (usable(sr.x[k], sr.y[k])) o << px(sr.x[k]) << ',' << py(sr.y[k]) << ' ';
            }
            o << "\"/>\n";
        }
        o << "<text x=\"" << L + 10 << "\" y=\"" << T + 16 + 16 * s << "\" fill=\"" << color << "\">"
          << escape(sr.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace lab
