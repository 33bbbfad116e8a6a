//! Built-in 10x16 monospace bitmaps for printable ASCII.
//!
//! Row `r` of a glyph is a 10-bit mask, most significant bit leftmost.

pub(super) const CELL_COLS: u8 = 10;
pub(super) const CELL_ROWS: usize = 16;

#[rustfmt::skip]
pub(super) const ASCII_BITMAPS: [[u16; CELL_ROWS]; 95] = [
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000], // ' '
    [0x000, 0x000, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x000, 0x000, 0x030, 0x030, 0x000, 0x000, 0x000], // '!'
    [0x000, 0x000, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000], // '"'
    [0x000, 0x000, 0x024, 0x026, 0x064, 0x1ff, 0x0fe, 0x04c, 0x0dc, 0x3fe, 0x0d8, 0x098, 0x190, 0x000, 0x000, 0x000], // '#'
    [0x000, 0x000, 0x030, 0x030, 0x0fc, 0x0f4, 0x0f0, 0x0f0, 0x07c, 0x03c, 0x03e, 0x0fc, 0x0fc, 0x030, 0x030, 0x000], // '$'
    [0x000, 0x000, 0x000, 0x1e0, 0x120, 0x120, 0x1e6, 0x018, 0x0e4, 0x11e, 0x012, 0x01a, 0x01e, 0x000, 0x000, 0x000], // '%'
    [0x000, 0x000, 0x078, 0x0f8, 0x0c0, 0x0e0, 0x060, 0x0f0, 0x1ba, 0x19e, 0x19e, 0x1fe, 0x0fe, 0x000, 0x000, 0x000], // '&'
    [0x000, 0x000, 0x030, 0x030, 0x030, 0x030, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000], // "'"
    [0x000, 0x000, 0x018, 0x030, 0x030, 0x030, 0x070, 0x060, 0x060, 0x060, 0x070, 0x030, 0x030, 0x018, 0x018, 0x000], // '('
    [0x000, 0x000, 0x060, 0x030, 0x030, 0x030, 0x038, 0x018, 0x018, 0x018, 0x038, 0x030, 0x030, 0x060, 0x060, 0x000], // ')'
    [0x000, 0x000, 0x030, 0x0b4, 0x0fc, 0x078, 0x0fc, 0x0b4, 0x030, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000], // '*'
    [0x000, 0x000, 0x000, 0x000, 0x010, 0x030, 0x030, 0x1fe, 0x1fe, 0x030, 0x030, 0x030, 0x000, 0x000, 0x000, 0x000], // '+'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x030, 0x030, 0x030, 0x030, 0x060, 0x000], // ','
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x078, 0x078, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000], // '-'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x030, 0x030, 0x030, 0x000, 0x000, 0x000], // '.'
    [0x000, 0x000, 0x004, 0x00c, 0x00c, 0x008, 0x018, 0x010, 0x030, 0x020, 0x060, 0x040, 0x0c0, 0x0c0, 0x080, 0x000], // '/'
    [0x000, 0x000, 0x078, 0x0fc, 0x0cc, 0x0ce, 0x1ce, 0x1fe, 0x1ce, 0x1ce, 0x0cc, 0x0fc, 0x078, 0x000, 0x000, 0x000], // '0'
    [0x000, 0x000, 0x070, 0x0f0, 0x0b0, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x0fe, 0x0fe, 0x000, 0x000, 0x000], // '1'
    [0x000, 0x000, 0x0f8, 0x0fc, 0x00c, 0x00c, 0x00c, 0x018, 0x030, 0x060, 0x0c0, 0x1fc, 0x1fc, 0x000, 0x000, 0x000], // '2'
    [0x000, 0x000, 0x0f8, 0x0fc, 0x00c, 0x00c, 0x03c, 0x078, 0x01c, 0x00e, 0x00e, 0x1fc, 0x1fc, 0x000, 0x000, 0x000], // '3'
    [0x000, 0x000, 0x018, 0x01c, 0x03c, 0x07c, 0x04c, 0x0cc, 0x19c, 0x1fe, 0x1fe, 0x00c, 0x00c, 0x000, 0x000, 0x000], // '4'
    [0x000, 0x000, 0x0fc, 0x0fc, 0x0c0, 0x0c0, 0x0f8, 0x0fc, 0x00c, 0x00e, 0x00c, 0x1fc, 0x0f8, 0x000, 0x000, 0x000], // '5'
    [0x000, 0x000, 0x03c, 0x0fc, 0x0c0, 0x0c0, 0x1fc, 0x1fc, 0x1ce, 0x1c6, 0x0ce, 0x0fc, 0x07c, 0x000, 0x000, 0x000], // '6'
    [0x000, 0x000, 0x0fc, 0x1fc, 0x00c, 0x01c, 0x018, 0x018, 0x038, 0x030, 0x070, 0x060, 0x060, 0x000, 0x000, 0x000], // '7'
    [0x000, 0x000, 0x078, 0x0fc, 0x0cc, 0x0cc, 0x0fc, 0x078, 0x0cc, 0x1ce, 0x1ce, 0x0fc, 0x0fc, 0x000, 0x000, 0x000], // '8'
    [0x000, 0x000, 0x078, 0x0fc, 0x1cc, 0x18c, 0x1ce, 0x0fe, 0x0fe, 0x00c, 0x00c, 0x0dc, 0x0f8, 0x000, 0x000, 0x000], // '9'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x030, 0x030, 0x030, 0x000, 0x000, 0x030, 0x030, 0x030, 0x000, 0x000, 0x000], // ':'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x030, 0x030, 0x030, 0x000, 0x000, 0x030, 0x030, 0x030, 0x070, 0x060, 0x000], // ';'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x00e, 0x03e, 0x1f0, 0x1c0, 0x0f0, 0x03e, 0x00e, 0x000, 0x000, 0x000, 0x000], // '<'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x1fe, 0x1fe, 0x000, 0x1fe, 0x1fe, 0x000, 0x000, 0x000, 0x000, 0x000], // '='
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x1c0, 0x0f0, 0x03e, 0x00e, 0x03e, 0x1f0, 0x1c0, 0x000, 0x000, 0x000, 0x000], // '>'
    [0x000, 0x000, 0x078, 0x0fc, 0x08c, 0x00c, 0x018, 0x030, 0x030, 0x030, 0x000, 0x030, 0x030, 0x000, 0x000, 0x000], // '?'
    [0x000, 0x000, 0x000, 0x07c, 0x0ce, 0x186, 0x1be, 0x136, 0x366, 0x362, 0x126, 0x1be, 0x180, 0x0c0, 0x07e, 0x000], // '@'
    [0x000, 0x000, 0x030, 0x078, 0x078, 0x078, 0x0fc, 0x0cc, 0x0cc, 0x0fc, 0x1ce, 0x186, 0x186, 0x000, 0x000, 0x000], // 'A'
    [0x000, 0x000, 0x0f8, 0x1fc, 0x1ce, 0x1ce, 0x1fc, 0x1fc, 0x1ce, 0x1c6, 0x1c6, 0x1fe, 0x1fc, 0x000, 0x000, 0x000], // 'B'
    [0x000, 0x000, 0x03c, 0x07c, 0x0e0, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0e0, 0x0fc, 0x07c, 0x000, 0x000, 0x000], // 'C'
    [0x000, 0x000, 0x0f0, 0x1fc, 0x1dc, 0x1ce, 0x1ce, 0x1c6, 0x1c6, 0x1ce, 0x1ce, 0x1fc, 0x1f8, 0x000, 0x000, 0x000], // 'D'
    [0x000, 0x000, 0x0fc, 0x0fe, 0x0c0, 0x0c0, 0x0fc, 0x0fc, 0x0c0, 0x0c0, 0x0c0, 0x0fc, 0x0fe, 0x000, 0x000, 0x000], // 'E'
    [0x000, 0x000, 0x0fc, 0x0fe, 0x0c0, 0x0c0, 0x0fc, 0x0fc, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x000, 0x000, 0x000], // 'F'
    [0x000, 0x000, 0x03c, 0x0fc, 0x0e0, 0x0c0, 0x1c0, 0x1ce, 0x1de, 0x1c6, 0x0c6, 0x0fe, 0x07e, 0x000, 0x000, 0x000], // 'G'
    [0x000, 0x000, 0x084, 0x1ce, 0x1ce, 0x1ce, 0x1fe, 0x1fe, 0x1ce, 0x1ce, 0x1ce, 0x1ce, 0x1ce, 0x000, 0x000, 0x000], // 'H'
    [0x000, 0x000, 0x0fc, 0x0fc, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x0fc, 0x0fc, 0x000, 0x000, 0x000], // 'I'
    [0x000, 0x000, 0x07c, 0x07c, 0x00c, 0x00c, 0x00c, 0x00c, 0x00c, 0x00c, 0x00c, 0x1fc, 0x1f8, 0x000, 0x000, 0x000], // 'J'
    [0x000, 0x000, 0x086, 0x1cc, 0x1dc, 0x1f8, 0x1f0, 0x1f0, 0x1f8, 0x1dc, 0x1cc, 0x1ce, 0x1c6, 0x000, 0x000, 0x000], // 'K'
    [0x000, 0x000, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0fe, 0x0fe, 0x000, 0x000, 0x000], // 'L'
    [0x000, 0x000, 0x1ce, 0x1ce, 0x1ce, 0x1fe, 0x1fe, 0x1b6, 0x1b6, 0x186, 0x186, 0x186, 0x186, 0x000, 0x000, 0x000], // 'M'
    [0x000, 0x000, 0x0c4, 0x1c6, 0x1e6, 0x1e6, 0x1e6, 0x1b6, 0x1b6, 0x19e, 0x19e, 0x18e, 0x18e, 0x000, 0x000, 0x000], // 'N'
    [0x000, 0x000, 0x078, 0x0fc, 0x0cc, 0x1ce, 0x1ce, 0x186, 0x1c6, 0x1ce, 0x1ce, 0x0fc, 0x078, 0x000, 0x000, 0x000], // 'O'
    [0x000, 0x000, 0x0f8, 0x0fc, 0x0ce, 0x0c6, 0x0ce, 0x0fe, 0x0fc, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x000, 0x000, 0x000], // 'P'
    [0x000, 0x000, 0x078, 0x0fc, 0x0cc, 0x1ce, 0x1ce, 0x186, 0x1c6, 0x1ce, 0x1ce, 0x0fc, 0x07c, 0x01c, 0x00c, 0x000], // 'Q'
    [0x000, 0x000, 0x0f8, 0x1fc, 0x1ce, 0x1ce, 0x1cc, 0x1fc, 0x1f8, 0x1dc, 0x1cc, 0x1ce, 0x1c6, 0x000, 0x000, 0x000], // 'R'
    [0x000, 0x000, 0x07c, 0x0fc, 0x1c4, 0x1c0, 0x0f0, 0x0fc, 0x03c, 0x00e, 0x00e, 0x1fc, 0x0fc, 0x000, 0x000, 0x000], // 'S'
    [0x000, 0x000, 0x1fe, 0x1fe, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x000, 0x000, 0x000], // 'T'
    [0x000, 0x000, 0x186, 0x1c6, 0x1c6, 0x1c6, 0x1c6, 0x1c6, 0x1c6, 0x1c6, 0x1ce, 0x0fc, 0x0fc, 0x000, 0x000, 0x000], // 'U'
    [0x000, 0x000, 0x186, 0x186, 0x1ce, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x078, 0x078, 0x078, 0x078, 0x000, 0x000, 0x000], // 'V'
    [0x000, 0x000, 0x102, 0x186, 0x186, 0x1b6, 0x1b6, 0x1b6, 0x1fe, 0x1fe, 0x1ce, 0x0ce, 0x0cc, 0x000, 0x000, 0x000], // 'W'
    [0x000, 0x000, 0x186, 0x1ce, 0x0cc, 0x078, 0x078, 0x030, 0x078, 0x078, 0x0ec, 0x0cc, 0x186, 0x000, 0x000, 0x000], // 'X'
    [0x000, 0x000, 0x186, 0x1ce, 0x0cc, 0x0fc, 0x078, 0x078, 0x030, 0x030, 0x030, 0x030, 0x030, 0x000, 0x000, 0x000], // 'Y'
    [0x000, 0x000, 0x0fe, 0x1fe, 0x00e, 0x01c, 0x018, 0x038, 0x070, 0x060, 0x0c0, 0x1fe, 0x1fe, 0x000, 0x000, 0x000], // 'Z'
    [0x000, 0x000, 0x038, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x038, 0x000], // '['
    [0x000, 0x000, 0x080, 0x0c0, 0x0c0, 0x060, 0x060, 0x020, 0x030, 0x010, 0x018, 0x008, 0x00c, 0x00c, 0x004, 0x000], // '\\'
    [0x000, 0x000, 0x078, 0x038, 0x038, 0x038, 0x038, 0x038, 0x038, 0x038, 0x038, 0x038, 0x038, 0x038, 0x078, 0x000], // ']'
    [0x000, 0x000, 0x030, 0x078, 0x0fc, 0x0ce, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000], // '^'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x1fe], // '_'
    [0x000, 0x040, 0x060, 0x030, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000], // '`'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0fc, 0x0cc, 0x00e, 0x0fe, 0x1ce, 0x1ce, 0x1ce, 0x0fe, 0x000, 0x000, 0x000], // 'a'
    [0x000, 0x000, 0x0c0, 0x0c0, 0x0c0, 0x0fc, 0x0fe, 0x0ce, 0x0c6, 0x0c6, 0x0ce, 0x0fe, 0x0fc, 0x000, 0x000, 0x000], // 'b'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x07c, 0x0f4, 0x0c0, 0x0c0, 0x0c0, 0x0c0, 0x0f4, 0x07c, 0x000, 0x000, 0x000], // 'c'
    [0x000, 0x000, 0x00e, 0x00e, 0x00e, 0x0fe, 0x1fe, 0x1ce, 0x18e, 0x18e, 0x1ce, 0x0fe, 0x0fe, 0x000, 0x000, 0x000], // 'd'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0fc, 0x0ce, 0x1c6, 0x1fe, 0x1fe, 0x1c0, 0x0ee, 0x0fe, 0x000, 0x000, 0x000], // 'e'
    [0x000, 0x000, 0x03e, 0x038, 0x030, 0x0fe, 0x0fc, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x000, 0x000, 0x000], // 'f'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0fe, 0x0fe, 0x1ce, 0x18e, 0x18e, 0x1ce, 0x0fe, 0x07e, 0x00e, 0x0fc, 0x0fc], // 'g'
    [0x000, 0x000, 0x0c0, 0x0c0, 0x0c0, 0x0fc, 0x0fc, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x000, 0x000, 0x000], // 'h'
    [0x000, 0x030, 0x030, 0x000, 0x000, 0x0f0, 0x0f0, 0x030, 0x030, 0x030, 0x030, 0x0fe, 0x1fe, 0x000, 0x000, 0x000], // 'i'
    [0x000, 0x018, 0x018, 0x000, 0x000, 0x0f8, 0x078, 0x018, 0x018, 0x018, 0x018, 0x018, 0x018, 0x038, 0x038, 0x1f0], // 'j'
    [0x000, 0x000, 0x0c0, 0x0c0, 0x0c0, 0x0ce, 0x0dc, 0x0f8, 0x0f0, 0x0f8, 0x0dc, 0x0cc, 0x0ce, 0x000, 0x000, 0x000], // 'k'
    [0x000, 0x000, 0x1f0, 0x070, 0x070, 0x070, 0x070, 0x070, 0x070, 0x070, 0x070, 0x03c, 0x03e, 0x000, 0x000, 0x000], // 'l'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x1fe, 0x1b6, 0x1b6, 0x1b6, 0x1b6, 0x1b6, 0x1b6, 0x1b6, 0x000, 0x000, 0x000], // 'm'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0fc, 0x0fc, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x000, 0x000, 0x000], // 'n'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x07c, 0x0fc, 0x1ce, 0x186, 0x186, 0x1ce, 0x0fc, 0x07c, 0x000, 0x000, 0x000], // 'o'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0fc, 0x0fe, 0x0ce, 0x0c6, 0x0c6, 0x0ce, 0x0fe, 0x0fc, 0x0c0, 0x0c0, 0x0c0], // 'p'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0fe, 0x0fe, 0x1ce, 0x18e, 0x18e, 0x1ce, 0x1fe, 0x0fe, 0x00e, 0x00e, 0x00e], // 'q'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x07e, 0x07e, 0x060, 0x060, 0x060, 0x060, 0x060, 0x060, 0x000, 0x000, 0x000], // 'r'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0fc, 0x0c4, 0x0c0, 0x0f8, 0x07c, 0x00c, 0x08c, 0x0fc, 0x000, 0x000, 0x000], // 's'
    [0x000, 0x000, 0x000, 0x070, 0x070, 0x1fc, 0x0fc, 0x070, 0x070, 0x070, 0x070, 0x07c, 0x03c, 0x000, 0x000, 0x000], // 't'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x0cc, 0x0fc, 0x0fc, 0x000, 0x000, 0x000], // 'u'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x1c6, 0x0ce, 0x0cc, 0x0cc, 0x0fc, 0x078, 0x078, 0x078, 0x000, 0x000, 0x000], // 'v'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x102, 0x186, 0x1b6, 0x1b6, 0x1b6, 0x1fe, 0x0cc, 0x0cc, 0x000, 0x000, 0x000], // 'w'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0ce, 0x0fc, 0x078, 0x030, 0x078, 0x078, 0x0cc, 0x1ce, 0x000, 0x000, 0x000], // 'x'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x186, 0x1ce, 0x0cc, 0x0ec, 0x078, 0x078, 0x078, 0x030, 0x030, 0x070, 0x1e0], // 'y'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x0fc, 0x0fc, 0x01c, 0x038, 0x070, 0x0e0, 0x0fc, 0x0fc, 0x000, 0x000, 0x000], // 'z'
    [0x000, 0x000, 0x03c, 0x030, 0x030, 0x030, 0x030, 0x030, 0x0e0, 0x070, 0x030, 0x030, 0x030, 0x030, 0x03c, 0x01c], // '{'
    [0x000, 0x000, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030, 0x030], // '|'
    [0x000, 0x000, 0x0f0, 0x030, 0x030, 0x030, 0x030, 0x030, 0x01c, 0x038, 0x030, 0x030, 0x030, 0x030, 0x0f0, 0x0e0], // '}'
    [0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000, 0x0e0, 0x1fe, 0x01c, 0x000, 0x000, 0x000, 0x000, 0x000, 0x000], // '~'
];
