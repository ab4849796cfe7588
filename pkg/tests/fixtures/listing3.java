private void sortByName() {
int i, j;
String v;
for (i = 0; i < count; i++) {
ChannelItem ch = chans[i];
v = ch.getTag();
j = i;
while ((j > 0) && (collator.compare(chans[j - 1].getTag(), v) > 0)) {
chans[j] = chans[j - 1];
j--;
}
chans[j] = ch;
}
}

public void bubblesort(String filenames[]) {
for (int i = filenames.length - 1; i > 0; i--) {
for (int j = 0; j < i; j++) {
String temp;
if (filenames[j].compareTo(filenames[j + 1]) > 0) {
temp = filenames[j];
filenames[j] = filenames[j + 1];
filenames[j + 1] = temp;
}
}
}
}
