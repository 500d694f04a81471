#ifndef GROUPREG_IO_HPP
#define GROUPREG_IO_HPP

#include <map>
#include <string>
#include <vector>

#include "groupreg/field.hpp"

namespace groupreg {

// Self-describing raw array container: a text header terminated by a `data`
// line, followed by a little-endian payload.
//
//   GRF1
//   kind image|vector|categorical|label
//   dims 96 96
//   spacing 1 1
//   dtype float32|float64|int32
//   channels 1
//   data <nbytes>
//   <payload>
enum class ArrayKind { Image, Vector, Categorical, Label };

struct ArrayHeader {
    ArrayKind kind = ArrayKind::Image;
    GridSpec grid;
    std::string dtype = "float32";
    int channels = 1;
};

struct ParseError : std::runtime_error {
    std::size_t byte_offset;
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

void write_image(const ImageField& f, const std::string& path, bool float64 = false);
void write_vector_field(const VectorField& f, const std::string& path,
                        bool float64 = false);
void write_categorical(const CategoricalField& f, const std::string& path,
                       bool float64 = false);
void write_labels(const LabelField& f, const std::string& path);

ArrayHeader peek_header(const std::string& path);
ImageField read_image(const std::string& path);
VectorField read_vector_field(const std::string& path);
CategoricalField read_categorical(const std::string& path);
LabelField read_labels(const std::string& path);

// Minimal ingestion-only reader for the single-file neuroimaging volume
// format with the classic 348-byte header. Converts to ImageField; supports
// uint8 / int16 / int32 / float32 / float64 payloads with scl scaling.
ImageField read_nifti(const std::string& path);

// Flat key-value run configuration with dotted field paths.
struct RunConfig {
    std::map<std::string, std::string> entries;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);

    bool has(const std::string& key) const { return entries.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    int get_int(const std::string& key, int def) const;
    uint64_t get_u64(const std::string& key, uint64_t def) const;
};

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace groupreg

#endif
