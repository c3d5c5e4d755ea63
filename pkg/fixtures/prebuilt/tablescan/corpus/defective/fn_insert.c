__int64 __fastcall fn_insert(struct table *a1, int a2, int a3)
{
  int i; // [rsp+Ch]

  for ( i = 0; i < a1->count; ++i )
  {
    if ( a1->slots[i].key == a2 )
    {
      a1->slots[i].val = a3;
      return (unsigned int)i;
    }
  }
  if ( a1->count >= 16 )
    JUMPOUT(0x1350LL);
  a1->slots[a1->count].key = a2;
  a1->slots[a1->count].val = a3;
  a1->count = a1->count + 1;
  return (unsigned int)(a1->count - 1);
}
