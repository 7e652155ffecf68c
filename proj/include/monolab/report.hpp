#pragma once

#include "monolab/spectral.hpp"
#include "monolab/apparent.hpp"
#include "monolab/partitions.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace monolab {

/// Wilson scan as CSV: theta_re, theta_im, W_re, W_im, err
inline void write_scan_csv(const ScanResult& scan, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw format_error("cannot open '" + path + "' for writing");
    os << "theta_re,theta_im,W_re,W_im,err\n";
    os << std::setprecision(17);
    for (auto& s : scan.samples)
        os << s.theta.real() << ',' << s.theta.imag() << ',' << s.W.real() << ',' << s.W.imag()
           << ',' << s.err << '\n';
}

inline ScanResult read_scan_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw format_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line.rfind("theta_re,", 0) != 0)
        throw format_error("'" + path + "' is not a scan CSV");
    ScanResult r;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double tr, ti, wr, wi, err;
        char c;
        if (!(ss >> tr >> c >> ti >> c >> wr >> c >> wi >> c >> err))
            throw format_error("malformed CSV row: " + line);
        r.samples.push_back({cplx{tr, ti}, cplx{wr, wi}, err});
    }
    return r;
}

namespace svgdetail {

struct Canvas {
    std::ostringstream body;
    double width = 640, height = 420;
    double ml = 60, mr = 20, mt = 20, mb = 45;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

    double px(double x) const { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); }
    double py(double y) const {
        return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
    }

    void axes(const std::string& xlabel, const std::string& ylabel) {
        body << "<rect x='" << ml << "' y='" << mt << "' width='" << width - ml - mr
             << "' height='" << height - mt - mb << "' fill='none' stroke='#444'/>\n";
        for (int k = 0; k <= 4; ++k) {
            double x = xmin + (xmax - xmin) * k / 4.0;
            double y = ymin + (ymax - ymin) * k / 4.0;
            body << "<text x='" << px(x) << "' y='" << height - mb + 16
                 << "' font-size='11' text-anchor='middle'>" << std::setprecision(3) << x
                 << "</text>\n";
            body << "<text x='" << ml - 6 << "' y='" << py(y) + 4
                 << "' font-size='11' text-anchor='end'>" << std::setprecision(3) << y
                 << "</text>\n";
        }
        body << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 8
             << "' font-size='12' text-anchor='middle'>" << xlabel << "</text>\n";
        body << "<text x='14' y='" << (mt + height - mb) / 2
             << "' font-size='12' text-anchor='middle' transform='rotate(-90 14 "
             << (mt + height - mb) / 2 << ")'>" << ylabel << "</text>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                  double widthpx = 1.5, bool dashed = false) {
        body << "<polyline fill='none' stroke='" << color << "' stroke-width='" << widthpx << "'";
        if (dashed) body << " stroke-dasharray='6 4'";
        body << " points='";
        for (auto& [x, y] : pts) body << px(x) << ',' << py(y) << ' ';
        body << "'/>\n";
    }

    void dot(double x, double y, const std::string& color, double r = 3.0) {
        body << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='" << r << "' fill='" << color
             << "'/>\n";
    }

    void label(double x, double y, const std::string& text, const std::string& color = "#222") {
        body << "<text x='" << px(x) << "' y='" << py(y) << "' font-size='12' fill='" << color
             << "'>" << text << "</text>\n";
    }

    void save(const std::string& path) {
        std::ofstream os(path);
        if (!os) throw format_error("cannot open '" + path + "' for writing");
        os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
           << "' viewBox='0 0 " << width << ' ' << height << "'>\n"
           << "<rect width='100%' height='100%' fill='white'/>\n"
           << body.str() << "</svg>\n";
    }
};

} // namespace svgdetail

/// log|W| against Re(theta), with the fitted asymptote overlaid when a
/// charge spectrum is supplied.
inline void write_logw_svg(const ScanResult& scan, const std::string& path,
                           const ChargeSpectrum* fit = nullptr) {
    svgdetail::Canvas c;
    std::vector<std::pair<double, double>> pts;
    for (auto& s : scan.samples)
        if (std::abs(s.W) > 0) pts.push_back({s.theta.real(), std::log(std::abs(s.W))});
    if (pts.empty()) throw format_error("empty scan; nothing to plot");
    c.xmin = pts.front().first;
    c.xmax = pts.back().first;
    c.ymin = c.ymax = pts.front().second;
    for (auto& [x, y] : pts) {
        c.ymin = std::min(c.ymin, y);
        c.ymax = std::max(c.ymax, y);
    }
    if (c.ymax - c.ymin < 1e-12) c.ymax = c.ymin + 1.0;
    if (c.xmax - c.xmin < 1e-12) c.xmax = c.xmin + 1.0;
    c.axes("Re theta", "log |W|");
    if (fit) {
        std::vector<std::pair<double, double>> curve;
        for (int k = 0; k <= 200; ++k) {
            double th = c.xmin + (c.xmax - c.xmin) * k / 200.0;
            cplx y = fit->C * std::exp(th);
            for (int n = 1; n <= fit->N && n <= static_cast<int>(fit->q.size()); ++n)
                y += fit->q[n - 1] * std::exp(-(2.0 * n - 1.0) * th);
            curve.push_back({th, y.real()});
        }
        c.polyline(curve, "#c44", 1.5, true);
        c.label(c.xmin + 0.05 * (c.xmax - c.xmin), c.ymax - 0.05 * (c.ymax - c.ymin),
                "fitted asymptote", "#c44");
    }
    c.polyline(pts, "#226");
    for (auto& [x, y] : pts) c.dot(x, y, "#226", 2.0);
    c.save(path);
}

/// Scatter of the apparent punctures of every moduli point, with the
/// primary punctures marked and the expected count in the legend.
inline void write_moduli_svg(const ModuliSet& set, const std::string& path) {
    svgdetail::Canvas c;
    double lim = 1.5;
    for (auto& pt : set.points)
        for (auto& ap : pt.op.apparent())
            lim = std::max({lim, std::abs(ap.x.real()), std::abs(ap.x.imag())});
    lim *= 1.15;
    c.xmin = -lim;
    c.xmax = lim;
    c.ymin = -lim;
    c.ymax = lim;
    c.axes("Re x", "Im x");
    for (auto& z : set.sphere.punctures()) c.dot(z.real(), z.imag(), "#000", 5.0);
    static const char* palette[] = {"#c44", "#262", "#24c", "#a60", "#929",
                                    "#077", "#b22", "#482", "#55d"};
    for (std::size_t i = 0; i < set.points.size(); ++i)
        for (auto& ap : set.points[i].op.apparent())
            c.dot(ap.x.real(), ap.x.imag(), palette[i % 9], 3.5);
    std::ostringstream legend;
    legend << "found " << set.points.size() << ", expected p3(" << set.L
           << ") = " << partition_count(static_cast<unsigned>(set.L), 3);
    c.label(-lim * 0.95, lim * 0.92, legend.str());
    c.save(path);
}

} // namespace monolab
