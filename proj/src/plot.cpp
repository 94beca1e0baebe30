#include "criacl/commands.hpp"
#include "criacl/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace criacl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& text, const fs::path& path, std::size_t line_no, const char* column) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad value '" + text + "' in column " +
                         column);
    }
    return v;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

// Pads [lo, hi] by 5% each side; a zero span becomes a unit-wide window.
std::pair<double, double> padded(double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0.0) {
        const double half = std::max(0.5, std::abs(lo) * 0.05);
        return {lo - half, hi + half};
    }
    return {lo - 0.05 * span, hi + 0.05 * span};
}

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

}  // namespace

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open training log " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty training log");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader) {
        throw ParseError(path.string() + ":1: unexpected header '" + line + "'");
    }
    static const char* kColumns[] = {"iter", "lr", "l_pix", "l_per", "l_adv", "l_align", "l_unif", "total", "d_loss"};
    std::vector<MetricsRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 10) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 10 fields, found " +
                             std::to_string(fields.size()));
        }
        MetricsRow row;
        const auto& it = fields[0];
        const auto [ptr, ec] = std::from_chars(it.data(), it.data() + it.size(), row.iter);
        if (ec != std::errc() || ptr != it.data() + it.size()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad value '" + it + "' in column iter");
        }
        double* targets[] = {&row.lr, &row.l_pix, &row.l_per, &row.l_adv, &row.l_align, &row.l_unif, &row.total,
                             &row.d_loss};
        for (std::size_t c = 0; c < 8; ++c) *targets[c] = parse_double(fields[c + 1], path, line_no, kColumns[c + 1]);
        if (!fields[9].empty()) row.psnr_val = parse_double(fields[9], path, line_no, "psnr_val");
        rows.push_back(row);
    }
    if (rows.empty()) throw ParseError(path.string() + ": training log has no data rows");
    return rows;
}

PlotMeta write_line_plot(const fs::path& path, const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<PlotSeries>& series) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    double x_lo = inf, x_hi = -inf, y_lo = inf, y_hi = -inf;
    json series_meta = json::array();
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ConfigError("plot series '" + s.name + "' has mismatched x/y lengths");
        double sy_lo = inf, sy_hi = -inf;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            sy_lo = std::min(sy_lo, s.y[i]);
            sy_hi = std::max(sy_hi, s.y[i]);
        }
        y_lo = std::min(y_lo, sy_lo);
        y_hi = std::max(y_hi, sy_hi);
        json m{{"name", s.name}, {"points", s.x.size()}};
        if (sy_lo <= sy_hi) {
            m["y_min"] = sy_lo;
            m["y_max"] = sy_hi;
        }
        series_meta.push_back(m);
    }
    if (x_lo > x_hi) x_lo = x_hi = 0.0;
    if (y_lo > y_hi) y_lo = y_hi = 0.0;
    PlotMeta meta;
    std::tie(meta.x_min, meta.x_max) = padded(x_lo, x_hi);
    std::tie(meta.y_min, meta.y_max) = padded(y_lo, y_hi);

    constexpr double W = 720, H = 440, L = 80, R = 160, T = 40, B = 60;
    const double pw = W - L - R, ph = H - T - B;
    auto sx = [&](double x) { return L + (x - meta.x_min) / (meta.x_max - meta.x_min) * pw; };
    auto sy = [&](double y) { return T + ph - (y - meta.y_min) / (meta.y_max - meta.y_min) * ph; };

    json metadata{{"title", title},
                  {"x_label", x_label},
                  {"y_label", y_label},
                  {"x_min", meta.x_min},
                  {"x_max", meta.x_max},
                  {"y_min", meta.y_min},
                  {"y_max", meta.y_max},
                  {"series", series_meta}};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    svg << "<metadata id=\"criacl-plot\">" << escape(metadata.dump()) << "</metadata>\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
        << "</text>\n";
    svg << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = meta.x_min + (meta.x_max - meta.x_min) * k / 4.0;
        const double yv = meta.y_min + (meta.y_max - meta.y_min) * k / 4.0;
        svg << "<text x=\"" << sx(xv) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
            << fmt(xv) << "</text>\n";
        svg << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
            << fmt(yv) << "</text>\n";
    }
    svg << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\" font-size=\"13\">"
        << escape(x_label) << "</text>\n";
    svg << "<text transform=\"translate(20," << T + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">"
        << escape(y_label) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto* color = kColors[s % std::size(kColors)];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
            svg << sx(series[s].x[i]) << ',' << sy(series[s].y[i]) << ' ';
        }
        svg << "\"/>\n";
        const double ly = T + 14 + 18.0 * static_cast<double>(s);
        svg << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << escape(series[s].name)
            << "</text>\n";
    }
    svg << "</svg>\n";

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << svg.str();
    return meta;
}

json read_plot_metadata(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open plot " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const auto text = buf.str();
    const std::string open = "<metadata id=\"criacl-plot\">";
    const auto a = text.find(open);
    const auto b = text.find("</metadata>", a);
    if (a == std::string::npos || b == std::string::npos) throw ParseError(path.string() + ": no plot metadata");
    std::string body = text.substr(a + open.size(), b - a - open.size());
    for (const auto& [from, to] : {std::pair{"&lt;", "<"}, std::pair{"&gt;", ">"}, std::pair{"&amp;", "&"}}) {
        for (auto p = body.find(from); p != std::string::npos; p = body.find(from, p + 1)) {
            body.replace(p, std::string_view(from).size(), to);
        }
    }
    return json::parse(body);
}

std::vector<fs::path> plot_metrics(const fs::path& log, const fs::path& out_dir) {
    const auto rows = read_metrics_csv(log);

    PlotSeries psnr{"psnr_val", {}, {}};
    for (const auto& r : rows) {
        if (r.psnr_val) {
            psnr.x.push_back(static_cast<double>(r.iter));
            psnr.y.push_back(*r.psnr_val);
        }
    }
    std::vector<PlotSeries> losses;
    const std::pair<const char*, double MetricsRow::*> columns[] = {
        {"l_pix", &MetricsRow::l_pix},     {"l_per", &MetricsRow::l_per},   {"l_adv", &MetricsRow::l_adv},
        {"l_align", &MetricsRow::l_align}, {"l_unif", &MetricsRow::l_unif}, {"total", &MetricsRow::total},
        {"d_loss", &MetricsRow::d_loss}};
    for (const auto& [name, member] : columns) {
        PlotSeries s{name, {}, {}};
        for (const auto& r : rows) {
            s.x.push_back(static_cast<double>(r.iter));
            s.y.push_back(r.*member);
        }
        losses.push_back(std::move(s));
    }

    fs::create_directories(out_dir);
    const auto psnr_path = out_dir / "psnr.svg";
    const auto loss_path = out_dir / "loss.svg";
    write_line_plot(psnr_path, "Validation PSNR", "iteration", "PSNR (dB)", {psnr});
    write_line_plot(loss_path, "Training losses", "iteration", "loss", losses);
    return {psnr_path, loss_path};
}

}  // namespace criacl
