__int64 __fastcall fn_find_min(struct table *a1)
{
  int v2; // eax
  int i; // [rsp+8h]

  v2 = 2147483647;
  for ( i = 0; i < a1->count; ++i )
  {
    if ( a1->slots[i].val < v2 )
      v2 = a1->slots[i].val;
  }
  return (unsigned int)v2;
}
