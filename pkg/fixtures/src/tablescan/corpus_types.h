struct entry
{
  int key;
  int val;
};
struct table
{
  int count;
  struct entry slots[16];
};
