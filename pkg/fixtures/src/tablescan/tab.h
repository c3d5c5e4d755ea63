#ifndef TAB_H
#define TAB_H

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

#endif
