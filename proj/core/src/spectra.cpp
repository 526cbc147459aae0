#include "carenet/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace carenet {

namespace {

bool all_finite(const float* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(data[i])) return false;
    }
    return true;
}

bool all_finite(const std::vector<double>& values) {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

WavenumberAxis::WavenumberAxis(double start_, double end_, int n_points_)
    : start(start_), end(end_), n_points(n_points_) {
    require(n_points >= 2, ErrorKind::Validation, "axis needs at least 2 points");
    require(start > end, ErrorKind::Validation, "axis must run high to low");
}

std::vector<double> WavenumberAxis::points() const {
    std::vector<double> p(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) p[static_cast<std::size_t>(i)] = at(i);
    return p;
}

int WavenumberAxis::nearest_index(double wavenumber) const {
    const double idx = (start - wavenumber) / spacing();
    const int i = static_cast<int>(std::lround(idx));
    return std::clamp(i, 0, n_points - 1);
}

bool WavenumberAxis::almost_equal(const WavenumberAxis& other, double tol) const {
    return n_points == other.n_points && std::abs(start - other.start) <= tol &&
           std::abs(end - other.end) <= tol;
}

void Spectrum::validate() const {
    require(static_cast<int>(values.size()) == axis.n_points, ErrorKind::Validation,
            "spectrum length does not match axis");
    require(all_finite(values), ErrorKind::Validation, "spectrum has non-finite values");
}

HyperMosaic::HyperMosaic(int height_, int width_, WavenumberAxis axis_)
    : height(height_), width(width_), axis(axis_) {
    require(height > 0 && width > 0, ErrorKind::Validation, "mosaic dimensions must be positive");
    cube.assign(static_cast<std::size_t>(height) * width * axis.n_points, 0.0f);
    mask.assign(static_cast<std::size_t>(height) * width, 1);
}

std::vector<double> HyperMosaic::spectrum_at(int row, int col) const {
    const float* p = pixel(row, col);
    return std::vector<double>(p, p + channels());
}

void HyperMosaic::set_spectrum(int row, int col, const std::vector<double>& values) {
    float* p = pixel(row, col);
    for (int c = 0; c < channels(); ++c) p[c] = static_cast<float>(values[static_cast<std::size_t>(c)]);
}

void HyperMosaic::validate() const {
    require(height > 0 && width > 0, ErrorKind::Validation, "mosaic dimensions must be positive");
    require(cube.size() == static_cast<std::size_t>(height) * width * axis.n_points,
            ErrorKind::Validation, "cube size does not match dimensions");
    require(mask.size() == static_cast<std::size_t>(height) * width, ErrorKind::Validation,
            "mask size does not match dimensions");
    require(all_finite(cube.data(), cube.size()), ErrorKind::Validation,
            "cube has non-finite values");
}

void ReferenceLibrary::validate() const {
    require(paraffin_spectra.size() >= 2, ErrorKind::Validation,
            "library needs at least 2 paraffin spectra");
    require(vapor_spectra.size() >= 2, ErrorKind::Validation,
            "library needs at least 2 vapor spectra");
    const auto check_row = [&](const std::vector<double>& row) {
        require(static_cast<int>(row.size()) == axis.n_points, ErrorKind::Validation,
                "library row length does not match axis");
    };
    for (const auto& row : paraffin_spectra) check_row(row);
    for (const auto& row : vapor_spectra) check_row(row);
    check_row(global_mean.values);
}

// ---------------------------------------------------------------------------
// HSC1 IO
// ---------------------------------------------------------------------------

namespace {

constexpr char kCubeMagic[4] = {'H', 'S', 'C', '1'};
constexpr char kLibraryMagic[4] = {'H', 'S', 'L', '1'};

template <typename T>
void put(std::string& out, T value) {
    // little-endian host assumed (x86/arm little-endian targets)
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.append(bytes, sizeof(T));
}

class Reader {
public:
    Reader(const std::filesystem::path& path, const char* magic) {
        stream_.open(path, std::ios::binary);
        if (!stream_) raise(ErrorKind::Io, "cannot open " + path.string());
        char got[4];
        read_raw(got, 4, "magic");
        if (std::memcmp(got, magic, 4) != 0)
            raise(ErrorKind::Format, "bad magic bytes in " + path.string());
    }

    template <typename T>
    T get() {
        T value;
        read_raw(reinterpret_cast<char*>(&value), sizeof(T), "field");
        return value;
    }

    void read_raw(char* dst, std::size_t n, const char* what) {
        stream_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(stream_.gcount()) != n)
            raise(ErrorKind::Io, std::string("truncated payload reading ") + what);
    }

    std::string get_string() {
        const std::uint16_t len = get<std::uint16_t>();
        std::string s(len, '\0');
        if (len > 0) read_raw(s.data(), len, "string");
        return s;
    }

private:
    std::ifstream stream_;
};

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) raise(ErrorKind::Io, "write failed for " + path.string());
}

void put_string(std::string& out, const std::string& s) {
    require(s.size() <= 0xFFFF, ErrorKind::Validation, "id string too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
    out.append(s);
}

}  // namespace

HyperMosaic read_cube(const std::filesystem::path& path) {
    Reader reader(path, kCubeMagic);
    const auto height = reader.get<std::uint32_t>();
    const auto width = reader.get<std::uint32_t>();
    const auto channels = reader.get<std::uint32_t>();
    const double start = reader.get<double>();
    const double end = reader.get<double>();
    require(height > 0 && width > 0 && channels >= 2, ErrorKind::Format,
            "invalid cube header dimensions");

    HyperMosaic mosaic(static_cast<int>(height), static_cast<int>(width),
                       WavenumberAxis(start, end, static_cast<int>(channels)));
    reader.read_raw(reinterpret_cast<char*>(mosaic.cube.data()),
                    mosaic.cube.size() * sizeof(float), "cube values");
    reader.read_raw(reinterpret_cast<char*>(mosaic.mask.data()), mosaic.mask.size(), "mask");
    mosaic.sample_id = reader.get_string();
    mosaic.patient_id = reader.get_string();

    require(all_finite(mosaic.cube.data(), mosaic.cube.size()), ErrorKind::Validation,
            "cube has non-finite values");
    return mosaic;
}

void write_cube(const HyperMosaic& mosaic, const std::filesystem::path& path) {
    mosaic.validate();
    std::string bytes;
    bytes.reserve(32 + mosaic.cube.size() * sizeof(float) + mosaic.mask.size());
    bytes.append(kCubeMagic, 4);
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(mosaic.height));
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(mosaic.width));
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(mosaic.channels()));
    put<double>(bytes, mosaic.axis.start);
    put<double>(bytes, mosaic.axis.end);
    bytes.append(reinterpret_cast<const char*>(mosaic.cube.data()),
                 mosaic.cube.size() * sizeof(float));
    bytes.append(reinterpret_cast<const char*>(mosaic.mask.data()), mosaic.mask.size());
    put_string(bytes, mosaic.sample_id);
    put_string(bytes, mosaic.patient_id);
    write_file(path, bytes);
}

ReferenceLibrary read_library(const std::filesystem::path& path) {
    Reader reader(path, kLibraryMagic);
    const auto channels = reader.get<std::uint32_t>();
    const double start = reader.get<double>();
    const double end = reader.get<double>();
    const auto n_paraffin = reader.get<std::uint32_t>();
    const auto n_vapor = reader.get<std::uint32_t>();

    ReferenceLibrary library;
    library.axis = WavenumberAxis(start, end, static_cast<int>(channels));
    const auto read_rows = [&](std::uint32_t n) {
        std::vector<std::vector<double>> rows(n, std::vector<double>(channels));
        for (auto& row : rows)
            reader.read_raw(reinterpret_cast<char*>(row.data()), channels * sizeof(double), "row");
        return rows;
    };
    library.paraffin_spectra = read_rows(n_paraffin);
    library.vapor_spectra = read_rows(n_vapor);
    library.global_mean.axis = library.axis;
    library.global_mean.values.resize(channels);
    reader.read_raw(reinterpret_cast<char*>(library.global_mean.values.data()),
                    channels * sizeof(double), "global mean");
    library.validate();
    return library;
}

void write_library(const ReferenceLibrary& library, const std::filesystem::path& path) {
    library.validate();
    std::string bytes;
    bytes.append(kLibraryMagic, 4);
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(library.axis.n_points));
    put<double>(bytes, library.axis.start);
    put<double>(bytes, library.axis.end);
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(library.paraffin_spectra.size()));
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(library.vapor_spectra.size()));
    const auto put_rows = [&](const std::vector<std::vector<double>>& rows) {
        for (const auto& row : rows)
            bytes.append(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(double));
    };
    put_rows(library.paraffin_spectra);
    put_rows(library.vapor_spectra);
    bytes.append(reinterpret_cast<const char*>(library.global_mean.values.data()),
                 library.global_mean.values.size() * sizeof(double));
    write_file(path, bytes);
}

// ---------------------------------------------------------------------------
// Axis truncation
// ---------------------------------------------------------------------------

WavenumberAxis truncate_axis(const WavenumberAxis& axis, double hi, double lo, int* first_index) {
    require(hi > lo, ErrorKind::Range, "truncation bounds must satisfy hi > lo");
    // Grid points that land exactly on a bound must stay in; tolerance is
    // relative to the spacing so no interior point can flip.
    const double tol = axis.spacing() * 1e-6;
    int first = -1, last = -1;
    for (int i = 0; i < axis.n_points; ++i) {
        const double p = axis.at(i);
        if (p <= hi + tol && p >= lo - tol) {
            if (first < 0) first = i;
            last = i;
        }
    }
    if (first < 0) raise(ErrorKind::Range, "truncation window does not intersect the axis");
    if (first_index) *first_index = first;
    const int count = last - first + 1;
    require(count >= 2, ErrorKind::Range, "truncation keeps fewer than 2 points");
    return WavenumberAxis(axis.at(first), axis.at(last), count);
}

HyperMosaic truncate_axis(const HyperMosaic& mosaic, double hi, double lo) {
    int first = 0;
    const WavenumberAxis cut = truncate_axis(mosaic.axis, hi, lo, &first);
    HyperMosaic out(mosaic.height, mosaic.width, cut);
    out.sample_id = mosaic.sample_id;
    out.patient_id = mosaic.patient_id;
    out.mask = mosaic.mask;
    const int c_in = mosaic.channels();
    const int c_out = cut.n_points;
    const std::size_t pixels = static_cast<std::size_t>(mosaic.height) * mosaic.width;
    for (std::size_t p = 0; p < pixels; ++p) {
        const float* src = mosaic.cube.data() + p * static_cast<std::size_t>(c_in) + first;
        float* dst = out.cube.data() + p * static_cast<std::size_t>(c_out);
        std::copy(src, src + c_out, dst);
    }
    return out;
}

Spectrum truncate_axis(const Spectrum& spectrum, double hi, double lo) {
    int first = 0;
    const WavenumberAxis cut = truncate_axis(spectrum.axis, hi, lo, &first);
    Spectrum out;
    out.axis = cut;
    out.values.assign(spectrum.values.begin() + first, spectrum.values.begin() + first + cut.n_points);
    return out;
}

std::vector<double> truncate_values(const WavenumberAxis& axis, const std::vector<double>& values,
                                    double hi, double lo) {
    int first = 0;
    const WavenumberAxis cut = truncate_axis(axis, hi, lo, &first);
    return std::vector<double>(values.begin() + first, values.begin() + first + cut.n_points);
}

}  // namespace carenet
