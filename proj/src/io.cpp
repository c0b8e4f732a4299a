// SPDX-License-Identifier: Apache-2.0
#include "fsilab/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "fsilab/errors.hpp"

namespace fsilab {

std::string format_number(double v) {
    if (std::isnan(v)) throw NaNOutput("refusing to write NaN");
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::row(const std::vector<CsvValue>& cells) {
    if (cells.size() != header_.size()) throw PreconditionViolation("CSV row width does not match header");
    std::string line;
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i].kind == CsvValue::Kind::Number ? format_number(cells[i].number) : cells[i].text;
    }
    rows_.push_back(std::move(line));
}

std::string CsvWriter::str() const {
    std::string out;
    for (size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
    out += '\n';
    for (const auto& r : rows_) out += r + '\n';
    return out;
}

void CsvWriter::write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PreconditionViolation("cannot write " + path);
    os << str();
}

namespace {

std::string digest_hex(const unsigned char* md, unsigned len) {
    std::ostringstream ss;
    for (unsigned i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return ss.str();
}

}  // namespace

std::string sha256_string(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    return digest_hex(md, len);
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PreconditionViolation("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_string(ss.str());
}

void write_binary_vectors(const std::string& path, const std::vector<Eigen::VectorXd>& blocks) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PreconditionViolation("cannot write " + path);
    const char magic[8] = {'F', 'S', 'I', 'L', 'A', 'B', '0', '1'};
    os.write(magic, 8);
    std::uint64_t nb = blocks.size();
    os.write(reinterpret_cast<const char*>(&nb), sizeof nb);
    for (const auto& b : blocks) {
        if (!b.allFinite()) throw NaNOutput("coefficient block contains non-finite values");
        std::uint64_t n = static_cast<std::uint64_t>(b.size());
        os.write(reinterpret_cast<const char*>(&n), sizeof n);
        os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(n * sizeof(double)));
    }
}

std::vector<Eigen::VectorXd> read_binary_vectors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PreconditionViolation("cannot read " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != "FSILAB01") throw PreconditionViolation("bad coefficient file " + path);
    std::uint64_t nb = 0;
    in.read(reinterpret_cast<char*>(&nb), sizeof nb);
    std::vector<Eigen::VectorXd> out;
    for (std::uint64_t i = 0; i < nb; ++i) {
        std::uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof n);
        Eigen::VectorXd v(static_cast<Eigen::Index>(n));
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw PreconditionViolation("truncated coefficient file " + path);
        out.push_back(std::move(v));
    }
    return out;
}

bool write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<SvgSeries>& series, bool log_y) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            double y = s.y[i];
            if (!std::isfinite(s.x[i]) || !std::isfinite(y)) continue;
            if (log_y) {
                if (y <= 0) continue;
                y = std::log10(y);
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!(xmax > xmin)) {
        if (xmin > xmax) return false;
        xmax = xmin + 1.0;
    }
    if (!(ymax > ymin)) {
        if (ymin > ymax) {
            ymin = 0.0;
            ymax = 1.0;
        } else {
            ymax = ymin + 1.0;
        }
    }
    const double W = 640, H = 400, L = 70, Rm = 20, T = 40, Bm = 50;
    auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - Rm); };
    auto sy = [&](double y) { return H - Bm - (y - ymin) / (ymax - ymin) * (H - T - Bm); };
    std::ofstream os(path);
    if (!os) return false;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - Bm << "\" x2=\"" << W - Rm << "\" y2=\"" << H - Bm
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - Bm << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    os << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2 << ")\" text-anchor=\"middle\">"
       << (log_y ? "log10 " : "") << ylabel << "</text>\n";
    char buf[64];
    for (int k = 0; k <= 4; ++k) {
        double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
        std::snprintf(buf, sizeof buf, "%.3g", xv);
        os << "<text x=\"" << sx(xv) << "\" y=\"" << H - Bm + 16 << "\" text-anchor=\"middle\" font-size=\"11\">" << buf
           << "</text>\n";
        std::snprintf(buf, sizeof buf, "%.3g", yv);
        os << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << buf
           << "</text>\n";
    }
    for (size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        os << "<polyline fill=\"none\" stroke=\"" << colors[k % 5] << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            double y = s.y[i];
            if (!std::isfinite(y) || !std::isfinite(s.x[i])) continue;
            if (log_y) {
                if (y <= 0) continue;
                y = std::log10(y);
            }
            os << sx(s.x[i]) << ',' << sy(y) << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << W - Rm - 4 << "\" y=\"" << T + 14 * (k + 1) << "\" text-anchor=\"end\" fill=\""
           << colors[k % 5] << "\" font-size=\"12\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return true;
}

}  // namespace fsilab
