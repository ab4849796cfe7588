public static String getExtension(final String filename) {
if (filename == null || filename.trim().length() == 0 || !filename.contains(".")) return null;
int pos = filename.lastIndexOf(".");
return filename.substring(pos + 1);
}

private static String getFormatByName(String name) {
if (name != null) {
final int j = name.lastIndexOf('.') + 1, k = name.lastIndexOf('/') + 1;
if (j > k && j < name.length()) return name.substring(j);
}
return null;
}
