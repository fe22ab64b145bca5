#include "coordreg/io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace coordreg {

namespace {

long long numerator_of(double entry, double grid_p, const std::string& path) {
    double t = entry * grid_p;
    double r = std::nearbyint(t);
    if (std::abs(t - r) > 1e-6 || std::abs(r) >= 9.0e18)
        throw IoError("write: entry off the 1/P grid in " + path);
    return static_cast<long long>(r);
}

}  // namespace

void write_matrix(const std::string& path, const DenseMatrix& m, double grid_p) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for write: " + path);
    f << m.rows << ' ' << m.cols << ' ' << m.magnitude_bound << ' '
      << static_cast<long long>(grid_p) << '\n';
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            f << numerator_of(m(i, j), grid_p, path);
            f << (j + 1 == m.cols ? '\n' : ' ');
        }
    }
    if (!f) throw IoError("write failed: " + path);
}

DenseMatrix read_matrix(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open for read: " + path);
    std::size_t n, d;
    double mbound;
    long long grid_p;
    if (!(f >> n >> d >> mbound >> grid_p) || grid_p <= 0)
        throw IoError("bad matrix header: " + path);
    DenseMatrix m(n, d);
    for (std::size_t i = 0; i < n * d; ++i) {
        long long num;
        if (!(f >> num)) throw IoError("truncated matrix body: " + path);
        m.entries[i] = static_cast<double>(num) / static_cast<double>(grid_p);
    }
    m.magnitude_bound = mbound;
    m.grid = static_cast<double>(grid_p);
    return m;
}

void write_vector(const std::string& path, const DenseVector& v, double grid_p) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for write: " + path);
    f << v.size() << ' ' << v.magnitude_bound << ' '
      << static_cast<long long>(grid_p) << '\n';
    for (std::size_t i = 0; i < v.size(); ++i)
        f << numerator_of(v[i], grid_p, path) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

DenseVector read_vector(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open for read: " + path);
    std::size_t n;
    double mbound;
    long long grid_p;
    if (!(f >> n >> mbound >> grid_p) || grid_p <= 0)
        throw IoError("bad vector header: " + path);
    DenseVector v(n);
    for (std::size_t i = 0; i < n; ++i) {
        long long num;
        if (!(f >> num)) throw IoError("truncated vector body: " + path);
        v[i] = static_cast<double>(num) / static_cast<double>(grid_p);
    }
    v.magnitude_bound = mbound;
    v.grid = static_cast<double>(grid_p);
    return v;
}

}  // namespace coordreg
