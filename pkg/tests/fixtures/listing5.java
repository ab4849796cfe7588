public static String getHexString(byte[] bytes) {
if (bytes == null) return null;
StringBuilder hex = new StringBuilder(2 * bytes.length);
for (byte b : bytes) {
hex.append(HEX_CHARS[(b & 0xF0) >> 4]).append(HEX_CHARS[(b & 0x0F)]);
}
return hex.toString();
}

String sequenceUsingFor(int start, int stop) {
StringBuilder builder = new StringBuilder();
for (int i = start; i <= stop; i++) {
if (i > start) builder.append(',');
builder.append(i);
}
return builder.toString();
}
